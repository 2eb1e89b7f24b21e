//! In-memory reference corpus, mirroring what `gen-corpus` writes to disk.

use r2d2::corpus::{self, plan_corpus, reference_families, CorpusConfig, Split};
use r2d2::nn::LabeledImage;
use r2d2::pipeline::bytes_to_network_image;
use r2d2::Label;
use rayon::prelude::*;

pub struct Sample {
    pub family: String,
    pub label: Label,
    pub split: Split,
    pub dex: Vec<u8>,
}

pub fn reference_samples(config: &CorpusConfig) -> Vec<Sample> {
    let specs = reference_families();
    let manifest = plan_corpus(&specs, config).unwrap();
    manifest
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let spec = &specs[i / config.per_family];
            assert_eq!(spec.name, row.family);
            Sample {
                family: row.family.clone(),
                label: row.label,
                split: row.split,
                dex: corpus::generate_sample(spec, (i % config.per_family) as u64),
            }
        })
        .collect()
}

pub fn to_dataset(samples: &[Sample], split: Split, size: usize) -> Vec<LabeledImage> {
    samples
        .par_iter()
        .filter(|s| s.split == split)
        .map(|s| LabeledImage {
            label: s.label,
            image: bytes_to_network_image(&s.dex, size, size).unwrap(),
        })
        .collect()
}
