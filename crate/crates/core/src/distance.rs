//! Pairwise similarity between samples: edit distance on byte streams and
//! MSE / RMS / similarity percentage on images.

use rayon::prelude::*;
use thiserror::Error;

use crate::pixel::{resize_nearest, PixelError, RgbImage};

/// 255²: MSE between all-black and all-white images.
pub const MAX_MSE: f64 = 65_025.0;
pub const DEFAULT_LEVENSHTEIN_CAP: usize = 65_536;

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error(transparent)]
    Pixel(#[from] PixelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditDistance {
    Distance(usize),
    /// An input exceeded the cap and strict mode was requested.
    Skipped,
}

impl EditDistance {
    pub fn value(self) -> Option<usize> {
        match self {
            EditDistance::Distance(d) => Some(d),
            EditDistance::Skipped => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevenshteinOptions {
    /// Inputs are truncated to this many bytes.
    pub cap: usize,
    /// Report `Skipped` instead of a truncated distance.
    pub strict: bool,
    /// When set, over-cap inputs are compared in full with a diagonal band
    /// of this half-width instead of being truncated. The result is then an
    /// upper bound on the true distance.
    pub band: Option<usize>,
}

impl Default for LevenshteinOptions {
    fn default() -> Self {
        LevenshteinOptions {
            cap: DEFAULT_LEVENSHTEIN_CAP,
            strict: false,
            band: None,
        }
    }
}

/// Unit-cost edit distance, capped per `options`.
pub fn levenshtein(a: &[u8], b: &[u8], options: LevenshteinOptions) -> EditDistance {
    let over_cap = a.len() > options.cap || b.len() > options.cap;
    if !over_cap {
        return EditDistance::Distance(levenshtein_full(a, b));
    }
    if let Some(band) = options.band {
        return EditDistance::Distance(levenshtein_banded(a, b, band));
    }
    if options.strict {
        return EditDistance::Skipped;
    }
    let a = &a[..a.len().min(options.cap)];
    let b = &b[..b.len().min(options.cap)];
    EditDistance::Distance(levenshtein_full(a, b))
}

/// Exact two-row dynamic program, O(|a|·|b|) time, O(min) memory.
pub fn levenshtein_full(a: &[u8], b: &[u8]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<u32> = (0..=short.len() as u32).collect();
    let mut cur = vec![0u32; short.len() + 1];
    for (i, &lc) in long.iter().enumerate() {
        cur[0] = i as u32 + 1;
        for (j, &sc) in short.iter().enumerate() {
            let sub = prev[j] + (lc != sc) as u32;
            let del = prev[j + 1] + 1;
            let ins = cur[j] + 1;
            cur[j + 1] = sub.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()] as usize
}

/// Dynamic program restricted to cells with |i − j| ≤ band (widened to
/// cover the length difference). Exact whenever the true distance is at
/// most the band; otherwise an upper bound.
pub fn levenshtein_banded(a: &[u8], b: &[u8], band: usize) -> usize {
    let (n, m) = (a.len(), b.len());
    let band = band.max(n.abs_diff(m));
    const INF: u32 = u32::MAX / 2;
    let mut prev = vec![INF; m + 1];
    let mut cur = vec![INF; m + 1];
    for (j, slot) in prev.iter_mut().enumerate().take(band.min(m) + 1) {
        *slot = j as u32;
    }
    for i in 1..=n {
        let lo = i.saturating_sub(band);
        let hi = (i + band).min(m);
        if lo > 0 {
            cur[lo - 1] = INF;
        }
        if lo == 0 {
            cur[0] = i as u32;
        }
        for j in lo.max(1)..=hi {
            let sub = prev[j - 1] + (a[i - 1] != b[j - 1]) as u32;
            let del = prev[j] + 1;
            let ins = cur[j - 1] + 1;
            cur[j] = sub.min(del).min(ins);
        }
        if hi < m {
            cur[hi + 1] = INF;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m] as usize
}

fn check_dims(a: &RgbImage, b: &RgbImage) -> Result<(), DistanceError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(DistanceError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

/// Mean over every pixel and channel of the squared difference.
pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64, DistanceError> {
    check_dims(a, b)?;
    let sum: u64 = a
        .as_bytes()
        .iter()
        .zip(b.as_bytes())
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    Ok(sum as f64 / a.as_bytes().len() as f64)
}

pub fn rms(a: &RgbImage, b: &RgbImage) -> Result<f64, DistanceError> {
    mse(a, b).map(f64::sqrt)
}

/// 100 · (1 − mse / 255²), clamped to [0, 100].
pub fn similarity_percent(a: &RgbImage, b: &RgbImage) -> Result<f64, DistanceError> {
    mse(a, b).map(similarity_from_mse)
}

pub fn similarity_from_mse(mse: f64) -> f64 {
    (100.0 * (1.0 - mse / MAX_MSE)).clamp(0.0, 100.0)
}

/// Brings two images to common dimensions by resizing the larger one (by
/// pixel count) to the smaller one's size. Equal-size pairs pass through.
pub fn align_pair(a: &RgbImage, b: &RgbImage) -> Result<(RgbImage, RgbImage), DistanceError> {
    if a.width() == b.width() && a.height() == b.height() {
        return Ok((a.clone(), b.clone()));
    }
    if a.pixel_count() <= b.pixel_count() {
        Ok((a.clone(), resize_nearest(b, a.width(), a.height())?))
    } else {
        Ok((resize_nearest(a, b.width(), b.height())?, b.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub levenshtein: EditDistance,
    pub rms: f64,
    pub mse: f64,
    pub similarity_percent: f64,
}

/// Full report for two samples: edit distance on their raw bytes, image
/// metrics after [`align_pair`].
pub fn compare(
    a_bytes: &[u8],
    a_image: &RgbImage,
    b_bytes: &[u8],
    b_image: &RgbImage,
    options: LevenshteinOptions,
) -> Result<SimilarityReport, DistanceError> {
    let (a_img, b_img) = align_pair(a_image, b_image)?;
    let mse = mse(&a_img, &b_img)?;
    Ok(SimilarityReport {
        levenshtein: levenshtein(a_bytes, b_bytes, options),
        rms: mse.sqrt(),
        mse,
        similarity_percent: similarity_from_mse(mse),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    Rms,
    Levenshtein,
    Similarity,
}

/// One sample as seen by the distance matrix.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub bytes: Vec<u8>,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    Skipped,
}

/// Symmetric pairwise matrix. Only the upper triangle is computed (in
/// parallel); the diagonal is the metric's identity value.
pub fn distance_matrix(
    samples: &[Sample],
    metric: Metric,
    options: LevenshteinOptions,
) -> Result<Vec<Vec<Cell>>, DistanceError> {
    let n = samples.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<Cell> = pairs
        .par_iter()
        .map(|&(i, j)| pair_value(&samples[i], &samples[j], metric, options))
        .collect::<Result<_, _>>()?;

    let identity = match metric {
        Metric::Similarity => 100.0,
        _ => 0.0,
    };
    let mut matrix = vec![vec![Cell::Value(identity); n]; n];
    for (&(i, j), cell) in pairs.iter().zip(values) {
        matrix[i][j] = cell.clone();
        matrix[j][i] = cell;
    }
    Ok(matrix)
}

fn pair_value(a: &Sample, b: &Sample, metric: Metric, options: LevenshteinOptions) -> Result<Cell, DistanceError> {
    if metric == Metric::Levenshtein {
        return Ok(match levenshtein(&a.bytes, &b.bytes, options) {
            EditDistance::Distance(d) => Cell::Value(d as f64),
            EditDistance::Skipped => Cell::Skipped,
        });
    }
    let (x, y) = align_pair(&a.image, &b.image)?;
    let m = mse(&x, &y)?;
    Ok(Cell::Value(match metric {
        Metric::Mse => m,
        Metric::Rms => m.sqrt(),
        Metric::Similarity => similarity_from_mse(m),
        Metric::Levenshtein => unreachable!(),
    }))
}

/// CSV with a header row of sample ids. Edit distances are integers, other
/// metrics two decimals.
pub fn matrix_to_csv(ids: &[String], matrix: &[Vec<Cell>], metric: Metric) -> String {
    let mut out = String::from("id");
    for id in ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(matrix) {
        out.push_str(id);
        for cell in row {
            out.push(',');
            match cell {
                Cell::Skipped => out.push_str("skipped"),
                Cell::Value(v) if metric == Metric::Levenshtein => out.push_str(&format!("{}", *v as u64)),
                Cell::Value(v) => out.push_str(&format!("{v:.2}")),
            }
        }
        out.push('\n');
    }
    out
}
