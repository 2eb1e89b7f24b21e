use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::images_to_tensor;
use super::ops::softmax_cross_entropy;
use super::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use super::{Network, NnError, Tensor};
use crate::pixel::RgbImage;
use crate::Label;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub label: Label,
    pub image: RgbImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Drives the shuffle order. Weight init is seeded separately when the
    /// network is built.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            optimizer: OptimizerConfig::new(OptimizerKind::Sgd),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches, sample weighted.
    pub loss: f32,
    /// Accuracy of the predictions made during the epoch's forward passes.
    pub train_accuracy: f32,
    pub eval_accuracy: Option<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    /// `epoch,loss,train_acc,eval_acc`; missing eval accuracy is `n/a`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,train_acc,eval_acc\n");
        for e in &self.epochs {
            let eval = e.eval_accuracy.map_or_else(|| "n/a".to_owned(), |a| format!("{a:.6}"));
            out.push_str(&format!("{},{:.6},{:.6},{}\n", e.epoch, e.loss, e.train_accuracy, eval));
        }
        out
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

fn check_dataset(data: &[LabeledImage], network: &Network) -> Result<(), NnError> {
    let (w, h) = (network.config.input_width, network.config.input_height);
    for item in data {
        if item.image.width() != w || item.image.height() != h {
            return Err(NnError::WrongInputSize {
                expected: (w, h),
                actual: (item.image.width(), item.image.height()),
            });
        }
    }
    Ok(())
}

/// Mini-batch training with softmax cross-entropy. Deterministic for a
/// given network, dataset order and config.
pub fn train(
    network: &mut Network,
    train_set: &[LabeledImage],
    eval_set: &[LabeledImage],
    config: &TrainConfig,
) -> Result<TrainLog, NnError> {
    if train_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let first = train_set[0].label;
    if train_set.iter().all(|s| s.label == first) {
        return Err(NnError::SingleClassDataset);
    }
    if config.batch_size == 0 {
        return Err(NnError::ShapeMismatch("batch size must be at least 1".into()));
    }
    check_dataset(train_set, network)?;
    check_dataset(eval_set, network)?;

    let mut optimizer = Optimizer::new(config.optimizer, network.parameters());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let images: Vec<&RgbImage> = batch.iter().map(|&i| &train_set[i].image).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set[i].label.index()).collect();
            let x = images_to_tensor(&images)?;

            optimizer.begin_step(&mut network.parameters_mut())?;
            let (logits, cache) = network.forward(&x)?;
            let out = softmax_cross_entropy(&logits, &labels)?;
            if !out.loss.is_finite() {
                return Err(NnError::DivergedLoss { epoch });
            }
            let grads = network.backward(&cache, &out.grad)?;
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(NnError::DivergedLoss { epoch });
            }
            optimizer.step(&mut network.parameters_mut(), &grads)?;

            loss_sum += out.loss as f64 * batch.len() as f64;
            correct += count_correct(&out.probs, &labels);
        }
        let eval_accuracy = if eval_set.is_empty() {
            None
        } else {
            Some(accuracy(network, eval_set)?)
        };
        log.epochs.push(EpochStats {
            epoch,
            loss: (loss_sum / train_set.len() as f64) as f32,
            train_accuracy: correct as f32 / train_set.len() as f32,
            eval_accuracy,
        });
    }
    if network.parameters().iter().any(|p| !p.is_finite()) {
        return Err(NnError::DivergedLoss { epoch: config.epochs });
    }
    Ok(log)
}

fn count_correct(probs: &Tensor, labels: &[usize]) -> usize {
    probs
        .data()
        .chunks_exact(2)
        .zip(labels)
        .filter(|(p, &l)| predicted_index(p[Label::Malicious.index()]) == l)
        .count()
}

/// Malicious iff p ≥ 0.5, matching the evaluation threshold rule.
fn predicted_index(p_malicious: f32) -> usize {
    if p_malicious >= 0.5 {
        Label::Malicious.index()
    } else {
        Label::Benign.index()
    }
}

/// Malicious-class probability for every image, in order, evaluated in
/// batches.
pub fn predict_batch(network: &Network, images: &[&RgbImage]) -> Result<Vec<f32>, NnError> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CHUNK) {
        let probs = network.probabilities(&images_to_tensor(chunk)?)?;
        out.extend(probs.data().chunks_exact(2).map(|p| p[Label::Malicious.index()]));
    }
    Ok(out)
}

pub fn accuracy(network: &Network, data: &[LabeledImage]) -> Result<f32, NnError> {
    let images: Vec<&RgbImage> = data.iter().map(|s| &s.image).collect();
    let probs = predict_batch(network, &images)?;
    let correct = probs
        .iter()
        .zip(data)
        .filter(|(&p, s)| predicted_index(p) == s.label.index())
        .count();
    Ok(correct as f32 / data.len() as f32)
}
