//! Deterministic synthetic corpus: minimal valid DEX files whose bodies are
//! drawn from per-family byte distributions with optional motifs.
//!
//! Family spec files are line oriented. `#` starts a comment. A `family`
//! line opens a block; the keys below it apply to that family:
//!
//! ```text
//! family benign-tools
//! label benign
//! size 2048 8192          # body bytes, inclusive range
//! seed 42
//! bytes 20-5f 90          # weight 90 spread evenly over 0x20..=0x5f
//! bytes 00-ff 10
//! motif 6e201000 0.002    # hex pattern, insertion probability per byte
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha1::Sha1;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dex::{adler32, ENDIAN_CONSTANT, HEADER_SIZE};
use crate::Label;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("family {family:?}: {message}")]
    InvalidSpec { family: String, message: String },
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Motif {
    pub bytes: Vec<u8>,
    /// Probability of starting this motif at any body position.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub name: String,
    pub label: Label,
    pub motifs: Vec<Motif>,
    /// Relative weight of every byte value in the body background.
    pub histogram: Vec<f64>,
    pub min_size: usize,
    pub max_size: usize,
    pub seed: u64,
}

impl FamilySpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |message: &str| CorpusError::InvalidSpec {
            family: self.name.clone(),
            message: message.to_owned(),
        };
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(fail("name must be non-empty [A-Za-z0-9_-]"));
        }
        if self.min_size > self.max_size {
            return Err(fail("min size exceeds max size"));
        }
        if self.histogram.len() != 256 || self.histogram.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(fail("histogram needs 256 finite non-negative weights"));
        }
        if self.histogram.iter().sum::<f64>() <= 0.0 {
            return Err(fail("histogram has no weight"));
        }
        for m in &self.motifs {
            if m.bytes.is_empty() || !(0.0..=1.0).contains(&m.frequency) {
                return Err(fail("motifs need bytes and a frequency in [0, 1]"));
            }
        }
        Ok(())
    }

    fn sample_seed(&self, index: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.name.as_bytes());
        h.update(index.to_le_bytes());
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    }
}

/// The two-family corpus used by the end-to-end checks: benign bodies
/// concentrated in 0x20..=0x5f, malicious ones in 0xa0..=0xdf.
pub fn reference_families() -> Vec<FamilySpec> {
    parse_family_specs(REFERENCE_FAMILIES).expect("bundled reference spec parses")
}

pub const REFERENCE_FAMILIES: &str = include_str!("../data/reference_families.txt");

fn parse_hex(s: &str) -> Option<Vec<u8>> {
    if s.is_empty() || !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
        .collect()
}

pub fn parse_family_specs(text: &str) -> Result<Vec<FamilySpec>, CorpusError> {
    let mut specs: Vec<FamilySpec> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| CorpusError::Parse { line: line_no, message };
        let mut words = line.split_whitespace();
        let key = words.next().unwrap();
        let args: Vec<&str> = words.collect();

        if key == "family" {
            let [name] = args[..] else {
                return Err(err("usage: family <name>".into()));
            };
            specs.push(FamilySpec {
                name: name.to_owned(),
                label: Label::Benign,
                motifs: Vec::new(),
                histogram: vec![0.0; 256],
                min_size: 1024,
                max_size: 4096,
                seed: 0,
            });
            continue;
        }
        let spec = specs
            .last_mut()
            .ok_or_else(|| err(format!("{key:?} before any family line")))?;
        match (key, &args[..]) {
            ("label", [l]) => spec.label = l.parse().map_err(err)?,
            ("size", [lo, hi]) => {
                spec.min_size = lo.parse().map_err(|_| err(format!("bad size {lo:?}")))?;
                spec.max_size = hi.parse().map_err(|_| err(format!("bad size {hi:?}")))?;
            }
            ("seed", [s]) => spec.seed = s.parse().map_err(|_| err(format!("bad seed {s:?}")))?,
            ("bytes", [range, weight]) => {
                let (lo, hi) = range.split_once('-').unwrap_or((range, range));
                let lo = u8::from_str_radix(lo, 16).map_err(|_| err(format!("bad byte range {range:?}")))?;
                let hi = u8::from_str_radix(hi, 16).map_err(|_| err(format!("bad byte range {range:?}")))?;
                let weight: f64 = weight.parse().map_err(|_| err(format!("bad weight {weight:?}")))?;
                if lo > hi || !(weight >= 0.0) {
                    return Err(err(format!("bad byte range {range:?} / weight {weight}")));
                }
                let per_byte = weight / (hi as f64 - lo as f64 + 1.0);
                for b in lo..=hi {
                    spec.histogram[b as usize] += per_byte;
                }
            }
            ("motif", [hex, freq]) => spec.motifs.push(Motif {
                bytes: parse_hex(hex).ok_or_else(|| err(format!("bad hex motif {hex:?}")))?,
                frequency: freq.parse().map_err(|_| err(format!("bad frequency {freq:?}")))?,
            }),
            _ => return Err(err(format!("unrecognised line {line:?}"))),
        }
    }
    for spec in &specs {
        spec.validate()?;
    }
    Ok(specs)
}

/// Renders specs back into the text format. Histograms are written one
/// byte value per line, so the output is verbose but exact.
pub fn format_family_specs(specs: &[FamilySpec]) -> String {
    let mut out = String::new();
    for s in specs {
        let _ = writeln!(out, "family {}", s.name);
        let _ = writeln!(out, "label {}", s.label);
        let _ = writeln!(out, "size {} {}", s.min_size, s.max_size);
        let _ = writeln!(out, "seed {}", s.seed);
        for (b, &w) in s.histogram.iter().enumerate() {
            if w > 0.0 {
                let _ = writeln!(out, "bytes {b:02x} {w:?}");
            }
        }
        for m in &s.motifs {
            let hex: String = m.bytes.iter().map(|b| format!("{b:02x}")).collect();
            let _ = writeln!(out, "motif {hex} {:?}", m.frequency);
        }
        out.push('\n');
    }
    out
}

/// One minimal DEX: valid header (magic, size, SHA-1 signature, adler32
/// checksum) followed by a synthetic body. Pure in `(spec, index)`.
pub fn generate_sample(spec: &FamilySpec, index: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.sample_seed(index));
    let body_len = rng.gen_range(spec.min_size..=spec.max_size);
    let background = WeightedIndex::new(&spec.histogram).expect("validated histogram");

    let mut body = Vec::with_capacity(body_len);
    while body.len() < body_len {
        let motif = spec.motifs.iter().find(|m| rng.gen_bool(m.frequency));
        match motif {
            Some(m) => {
                let take = m.bytes.len().min(body_len - body.len());
                body.extend_from_slice(&m.bytes[..take]);
            }
            None => body.push(background.sample(&mut rng) as u8),
        }
    }
    build_dex(&body)
}

/// Wraps `body` in a 0x70-byte DEX header with correct size, signature and
/// checksum fields.
pub fn build_dex(body: &[u8]) -> Vec<u8> {
    let file_size = HEADER_SIZE + body.len();
    let mut dex = vec![0u8; HEADER_SIZE];
    dex[..8].copy_from_slice(b"dex\n035\0");
    let put = |buf: &mut [u8], at: usize, v: u32| buf[at..at + 4].copy_from_slice(&v.to_le_bytes());
    put(&mut dex, 32, file_size as u32);
    put(&mut dex, 36, HEADER_SIZE as u32);
    put(&mut dex, 40, ENDIAN_CONSTANT);
    // data_size / data_off
    put(&mut dex, 104, body.len() as u32);
    put(&mut dex, 108, if body.is_empty() { 0 } else { HEADER_SIZE as u32 });
    dex.extend_from_slice(body);

    let signature = Sha1::digest(&dex[32..]);
    dex[12..32].copy_from_slice(&signature);
    let checksum = adler32(&dex[12..]);
    dex[8..12].copy_from_slice(&checksum.to_le_bytes());
    dex
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    pub family: String,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Directory that relative paths resolve against.
    pub base_dir: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

impl Manifest {
    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        self.base_dir.join(&row.path)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn to_csv(&self) -> Result<String, CorpusError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["path", "family", "label", "split"])?;
        for r in &self.rows {
            let path = r
                .path
                .to_str()
                .ok_or_else(|| CorpusError::Manifest("non-UTF-8 path".into()))?;
            // forward slashes keep manifests portable
            w.write_record([&path.replace('\\', "/"), &r.family, r.label.as_str(), r.split.as_str()])?;
        }
        let bytes = w.into_inner().map_err(|e| CorpusError::Manifest(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 records"))
    }

    pub fn from_csv(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "family", "label", "split"] {
            return Err(CorpusError::Manifest(format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |m: String| CorpusError::Manifest(format!("row {}: {m}", i + 2));
            if record.len() != 4 {
                return Err(bad("expected 4 fields".into()));
            }
            rows.push(ManifestRow {
                path: PathBuf::from(&record[0]),
                family: record[1].to_owned(),
                label: record[2].parse().map_err(bad)?,
                split: record[3].parse().map_err(bad)?,
            });
        }
        Ok(Manifest {
            rows,
            base_dir: base_dir.into(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_csv(&text, base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusConfig {
    pub per_family: usize,
    /// Fraction of each family assigned to the training split; the rest is
    /// test.
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            per_family: 250,
            train_fraction: 0.8,
            split_seed: 42,
        }
    }
}

/// Indices of one family that go to the training split: the
/// `round(count · fraction)` smallest by a keyed hash of the index.
pub fn train_indices(family: &str, count: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let n_train = (count as f64 * fraction).round() as usize;
    let mut keyed: Vec<(u64, usize)> = (0..count)
        .map(|i| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(family.as_bytes());
            h.update((i as u64).to_le_bytes());
            (u64::from_le_bytes(h.finalize()[..8].try_into().unwrap()), i)
        })
        .collect();
    keyed.sort_unstable();
    let mut is_train = vec![false; count];
    for &(_, i) in keyed.iter().take(n_train) {
        is_train[i] = true;
    }
    is_train
}

/// Builds the manifest without touching the filesystem.
pub fn plan_corpus(specs: &[FamilySpec], config: &CorpusConfig) -> Result<Manifest, CorpusError> {
    if config.per_family == 0 {
        return Err(CorpusError::InvalidConfig("count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(CorpusError::InvalidConfig(format!(
            "train fraction {} outside [0, 1]",
            config.train_fraction
        )));
    }
    let mut rows = Vec::new();
    for spec in specs {
        spec.validate()?;
        let is_train = train_indices(&spec.name, config.per_family, config.train_fraction, config.split_seed);
        for (i, train) in is_train.into_iter().enumerate() {
            rows.push(ManifestRow {
                path: PathBuf::from(format!("{}/{}-{:05}.dex", spec.name, spec.name, i)),
                family: spec.name.clone(),
                label: spec.label,
                split: if train { Split::Train } else { Split::Test },
            });
        }
    }
    Ok(Manifest {
        rows,
        base_dir: PathBuf::new(),
    })
}

/// Writes every sample plus `manifest.csv` under `out_dir`.
pub fn generate_corpus(
    specs: &[FamilySpec],
    config: &CorpusConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest, CorpusError> {
    let out_dir = out_dir.as_ref();
    let mut manifest = plan_corpus(specs, config)?;
    manifest.base_dir = out_dir.to_path_buf();
    for spec in specs {
        fs::create_dir_all(out_dir.join(&spec.name))?;
    }
    use rayon::prelude::*;
    let per_family = config.per_family;
    manifest
        .rows
        .par_iter()
        .enumerate()
        .try_for_each(|(i, row)| -> Result<(), CorpusError> {
            let spec = &specs[i / per_family];
            let bytes = generate_sample(spec, (i % per_family) as u64);
            fs::write(out_dir.join(&row.path), bytes)?;
            Ok(())
        })?;
    fs::write(out_dir.join(MANIFEST_FILE), manifest.to_csv()?)?;
    Ok(manifest)
}
