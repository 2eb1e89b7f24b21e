//! Header mutation fuzzing: corrupt ZIP and DEX headers and require that
//! every parser path returns (Ok or Err) without panicking.

use std::panic::{catch_unwind, AssertUnwindSafe};

use r2d2::archive::ArchiveIndex;
use r2d2::corpus::build_dex;
use r2d2::dex::{parse_dex_with, DexOptions};
use r2d2::pipeline;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::zipw;

pub struct Seedling {
    pub bytes: Vec<u8>,
    /// Byte ranges holding header fields, where mutations concentrate.
    pub hot: Vec<std::ops::Range<usize>>,
}

pub fn seed_inputs() -> Vec<Seedling> {
    let dex = build_dex(&(0..600u32).map(|i| (i * 7) as u8).collect::<Vec<_>>());
    let entries = [
        zipw::stored("AndroidManifest.xml", b"<manifest/>"),
        zipw::deflated("classes.dex", &dex),
        zipw::stored("classes.dex", &dex),
        zipw::deflated("res/raw/blob", &[0u8; 1024]),
    ];
    let built = zipw::build(&entries);
    let hot = std::iter::once(built.central_directory_offset..built.bytes.len())
        .chain(built.payload_offsets.iter().map(|&off| off.saturating_sub(40)..off))
        .collect();
    let zip_crate = zipw::apk_with_zip_crate(&dex, true);
    let n = zip_crate.len();
    vec![
        Seedling {
            bytes: built.bytes,
            hot,
        },
        Seedling {
            hot: vec![0..64, n.saturating_sub(300)..n],
            bytes: zip_crate,
        },
        Seedling {
            hot: std::iter::once(0..0x70).collect(),
            bytes: dex,
        },
    ]
}

const BOUNDARY_U32: [u32; 7] = [0, 1, 0x7f, 0xffff, 0x7fff_ffff, 0xffff_fffe, 0xffff_ffff];

pub fn mutate(seed: &Seedling, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut b = seed.bytes.clone();
    for _ in 0..rng.gen_range(1..=4) {
        if b.is_empty() {
            break;
        }
        let range = &seed.hot[rng.gen_range(0..seed.hot.len())];
        let lo = range.start.min(b.len() - 1);
        let hi = range.end.clamp(lo + 1, b.len());
        let at = rng.gen_range(lo..hi);
        match rng.gen_range(0..6) {
            0 => b[at] ^= 1 << rng.gen_range(0..8),
            1 => b[at] = rng.gen(),
            2 => {
                let v = BOUNDARY_U32[rng.gen_range(0..BOUNDARY_U32.len())].to_le_bytes();
                let end = (at + 2).min(b.len());
                b[at..end].copy_from_slice(&v[..end - at]);
            }
            3 => {
                let v = BOUNDARY_U32[rng.gen_range(0..BOUNDARY_U32.len())].to_le_bytes();
                let end = (at + 4).min(b.len());
                b[at..end].copy_from_slice(&v[..end - at]);
            }
            4 => b.truncate(at),
            _ => {
                let n = rng.gen_range(1..16);
                b.splice(at..at, (0..n).map(|_| rng.gen::<u8>()));
            }
        }
    }
    b
}

/// Exercises every reader on `bytes`; true if the full pipeline accepted it.
fn exercise(bytes: Vec<u8>) -> bool {
    if let Ok(index) = ArchiveIndex::from_bytes(bytes.clone()) {
        for e in index.entries().to_vec() {
            let _ = index.extract(&e.name);
        }
        let _ = index.extract_classes_dex();
    }
    for strict in [false, true] {
        let _ = parse_dex_with(bytes.clone(), DexOptions { strict });
    }
    match pipeline::load_bytes(bytes) {
        Ok(loaded) => pipeline::network_image(&loaded, 16, 16).is_ok(),
        Err(_) => false,
    }
}

/// Runs `cases` mutations. Returns the number of inputs that parsed
/// successfully somewhere, or the first panic.
pub fn run(cases: usize, seed: u64) -> Result<usize, String> {
    let seeds = seed_inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    for case in 0..cases {
        let s = &seeds[case % seeds.len()];
        let input = mutate(s, &mut rng);
        let outcome = catch_unwind(AssertUnwindSafe(|| exercise(input.clone())));
        match outcome {
            Ok(ok) => accepted += ok as usize,
            Err(p) => {
                let msg = p
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| p.downcast_ref::<String>().cloned())
                    .unwrap_or_default();
                return Err(format!("case {case} panicked: {msg}; input {} bytes", input.len()));
            }
        }
    }
    Ok(accepted)
}
