//! Confusion matrices, detection metrics and threshold sweeps.
//!
//! A sample is predicted malicious iff its score is at least the threshold,
//! so threshold 0 flags everything. Metrics with a zero denominator are
//! `None` and render as `n/a`.

use thiserror::Error;

use crate::nn::{predict_batch, LabeledImage, Network, NnError};
use crate::pixel::RgbImage;
use crate::Label;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("threshold grid is not sorted ascending")]
    UnsortedGrid,
    #[error("invalid sweep {0:?} (expected start:step:end)")]
    BadSweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub label: Label,
    /// Malicious-class probability.
    pub score: f64,
}

pub fn score_dataset(network: &Network, data: &[LabeledImage]) -> Result<Vec<Score>, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let images: Vec<&RgbImage> = data.iter().map(|s| &s.image).collect();
    let probs = predict_batch(network, &images)?;
    Ok(data
        .iter()
        .zip(probs)
        .map(|(s, p)| Score {
            label: s.label,
            score: p as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub threshold: f64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(EvalError::ThresholdOutOfRange(t));
    }
    Ok(())
}

pub fn confusion_at(scores: &[Score], threshold: f64) -> Result<ConfusionMatrix, EvalError> {
    check_threshold(threshold)?;
    let mut cm = ConfusionMatrix {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
        threshold,
    };
    for s in scores {
        let flagged = s.score >= threshold;
        match (s.label, flagged) {
            (Label::Malicious, true) => cm.tp += 1,
            (Label::Malicious, false) => cm.fn_ += 1,
            (Label::Benign, true) => cm.fp += 1,
            (Label::Benign, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    /// Detection rate.
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        fpr: ratio(cm.fp, cm.fp + cm.tn),
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// One row per threshold. Scores are sorted once and each threshold is a
/// binary search, so a sweep costs O((n + t) log n).
pub fn threshold_sweep(scores: &[Score], grid: &[f64]) -> Result<Vec<SweepRow>, EvalError> {
    for &t in grid {
        check_threshold(t)?;
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::UnsortedGrid);
    }
    let mut malicious: Vec<f64> = scores
        .iter()
        .filter(|s| s.label == Label::Malicious)
        .map(|s| s.score)
        .collect();
    let mut benign: Vec<f64> = scores
        .iter()
        .filter(|s| s.label == Label::Benign)
        .map(|s| s.score)
        .collect();
    malicious.sort_by(f64::total_cmp);
    benign.sort_by(f64::total_cmp);
    // number of scores strictly below t
    let below = |v: &[f64], t: f64| v.partition_point(|&s| s < t) as u64;

    Ok(grid
        .iter()
        .map(|&t| {
            let fn_ = below(&malicious, t);
            let tn = below(&benign, t);
            let confusion = ConfusionMatrix {
                tp: malicious.len() as u64 - fn_,
                fp: benign.len() as u64 - tn,
                fn_,
                tn,
                threshold: t,
            };
            SweepRow {
                confusion,
                metrics: metrics(&confusion),
            }
        })
        .collect())
}

/// Parses `start:step:end` into an inclusive grid. The point count is
/// rounded so float steps like 0.1 land exactly on `end`.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>, EvalError> {
    let bad = || EvalError::BadSweep(spec.to_owned());
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, step, end] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || end < start || !start.is_finite() || !end.is_finite() {
        return Err(bad());
    }
    let intervals = ((end - start) / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=intervals)
        .map(|i| {
            let t = start + i as f64 * step;
            // snap float noise such as 0.30000000000000004
            (t * 1e9).round() / 1e9
        })
        .collect();
    for &t in &grid {
        check_threshold(t)?;
    }
    Ok(grid)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.6}"))
}

/// `threshold,tp,fp,fn,tn,acc,prec,recall,fpr,f1`.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("threshold,tp,fp,fn,tn,acc,prec,recall,fpr,f1\n");
    for r in rows {
        let c = &r.confusion;
        let m = &r.metrics;
        out.push_str(&format!(
            "{:.4},{},{},{},{},{},{},{},{},{}\n",
            c.threshold,
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            cell(m.accuracy),
            cell(m.precision),
            cell(m.recall),
            cell(m.fpr),
            cell(m.f1)
        ));
    }
    out
}

/// Whitespace-separated columns for gnuplot: threshold acc prec recall fpr
/// f1, undefined values as `NaN`.
pub fn sweep_to_gnuplot(rows: &[SweepRow]) -> String {
    let mut out = String::from("# threshold acc prec recall fpr f1\n");
    let g = |v: Option<f64>| v.map_or_else(|| "NaN".to_owned(), |x| format!("{x:.6}"));
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{:.4} {} {} {} {} {}\n",
            r.confusion.threshold,
            g(m.accuracy),
            g(m.precision),
            g(m.recall),
            g(m.fpr),
            g(m.f1)
        ));
    }
    out
}
