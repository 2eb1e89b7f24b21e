//! SGD, Nesterov accelerated gradient, AdaGrad and AdaDelta.
//!
//! NAG evaluates the gradient at the look-ahead point w + μv. Callers
//! bracket the gradient computation with [`Optimizer::begin_step`], which
//! moves the parameters to that point, and [`Optimizer::step`], which
//! restores them and applies the update. For the other methods
//! `begin_step` is a no-op.

use std::fmt;
use std::str::FromStr;

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Nag,
    AdaGrad,
    AdaDelta,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::Nag,
        OptimizerKind::AdaGrad,
        OptimizerKind::AdaDelta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Nag => "nag",
            OptimizerKind::AdaGrad => "adagrad",
            OptimizerKind::AdaDelta => "adadelta",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown optimizer {s:?} (expected sgd, nag, adagrad or adadelta)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f32,
    /// NAG momentum μ.
    pub momentum: f32,
    /// AdaDelta decay ρ.
    pub rho: f32,
    pub epsilon: f32,
}

pub const DEFAULT_LEARNING_RATE: f32 = 0.01;
pub const DEFAULT_MOMENTUM: f32 = 0.9;
pub const DEFAULT_RHO: f32 = 0.95;
pub const DEFAULT_EPSILON: f32 = 1e-8;
/// AdaDelta has no learning rate; ε sets its initial step size.
pub const DEFAULT_ADADELTA_EPSILON: f32 = 1e-6;

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerConfig {
            kind,
            learning_rate: DEFAULT_LEARNING_RATE,
            momentum: DEFAULT_MOMENTUM,
            rho: DEFAULT_RHO,
            epsilon: match kind {
                OptimizerKind::AdaDelta => DEFAULT_ADADELTA_EPSILON,
                _ => DEFAULT_EPSILON,
            },
        }
    }

    pub fn with_learning_rate(mut self, lr: f32) -> Self {
        self.learning_rate = lr;
        self
    }
}

/// Per-parameter-tensor accumulators.
#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Sgd,
    Nag {
        velocity: Vec<f32>,
        /// Parameters before the look-ahead shift, present between
        /// `begin_step` and `step`.
        saved: Option<Vec<f32>>,
    },
    AdaGrad {
        sum_sq: Vec<f32>,
    },
    AdaDelta {
        avg_sq_grad: Vec<f32>,
        avg_sq_delta: Vec<f32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    slots: Vec<Slot>,
    shapes: Vec<Vec<usize>>,
}

impl Optimizer {
    pub fn new<'a>(config: OptimizerConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let mut slots = Vec::new();
        let mut shapes = Vec::new();
        for p in params {
            let n = p.len();
            shapes.push(p.shape().to_vec());
            slots.push(match config.kind {
                OptimizerKind::Sgd => Slot::Sgd,
                OptimizerKind::Nag => Slot::Nag {
                    velocity: vec![0.0; n],
                    saved: None,
                },
                OptimizerKind::AdaGrad => Slot::AdaGrad { sum_sq: vec![0.0; n] },
                OptimizerKind::AdaDelta => Slot::AdaDelta {
                    avg_sq_grad: vec![0.0; n],
                    avg_sq_delta: vec![0.0; n],
                },
            });
        }
        Optimizer { config, slots, shapes }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// AdaGrad squared-gradient sums for parameter `i`.
    pub fn adagrad_accumulator(&self, i: usize) -> Option<&[f32]> {
        match self.slots.get(i) {
            Some(Slot::AdaGrad { sum_sq }) => Some(sum_sq),
            _ => None,
        }
    }

    pub fn velocity(&self, i: usize) -> Option<&[f32]> {
        match self.slots.get(i) {
            Some(Slot::Nag { velocity, .. }) => Some(velocity),
            _ => None,
        }
    }

    fn check_shapes(&self, params: &[&mut Tensor]) -> Result<(), NnError> {
        if params.len() != self.slots.len() || params.iter().zip(&self.shapes).any(|(p, s)| p.shape() != s.as_slice()) {
            return Err(NnError::ShapeMismatch(
                "optimizer state does not match parameters".into(),
            ));
        }
        Ok(())
    }

    /// Moves parameters to the point where the gradient should be taken.
    pub fn begin_step(&mut self, params: &mut [&mut Tensor]) -> Result<(), NnError> {
        self.check_shapes(params)?;
        let mu = self.config.momentum;
        for (p, slot) in params.iter_mut().zip(&mut self.slots) {
            if let Slot::Nag { velocity, saved } = slot {
                *saved = Some(p.data().to_vec());
                for (w, &v) in p.data_mut().iter_mut().zip(velocity.iter()) {
                    *w += mu * v;
                }
            }
        }
        Ok(())
    }

    /// Applies one update given gradients taken at the `begin_step` point.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), NnError> {
        self.check_shapes(params)?;
        if grads.len() != params.len() || grads.iter().zip(params.iter()).any(|(g, p)| g.shape() != p.shape()) {
            return Err(NnError::ShapeMismatch("gradients do not match parameters".into()));
        }
        let OptimizerConfig {
            learning_rate: lr,
            momentum: mu,
            rho,
            epsilon: eps,
            ..
        } = self.config;

        for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let w = p.data_mut();
            let g = g.data();
            match slot {
                Slot::Sgd => {
                    for (w, &g) in w.iter_mut().zip(g) {
                        *w -= lr * g;
                    }
                }
                Slot::Nag { velocity, saved } => {
                    // Without begin_step the look-ahead point is w itself.
                    if let Some(base) = saved.take() {
                        w.copy_from_slice(&base);
                    }
                    for ((w, v), &g) in w.iter_mut().zip(velocity.iter_mut()).zip(g) {
                        *v = mu * *v - lr * g;
                        *w += *v;
                    }
                }
                Slot::AdaGrad { sum_sq } => {
                    for ((w, acc), &g) in w.iter_mut().zip(sum_sq.iter_mut()).zip(g) {
                        *acc += g * g;
                        *w -= lr * g / (acc.sqrt() + eps);
                    }
                }
                Slot::AdaDelta {
                    avg_sq_grad,
                    avg_sq_delta,
                } => {
                    for (((w, eg), ed), &g) in w
                        .iter_mut()
                        .zip(avg_sq_grad.iter_mut())
                        .zip(avg_sq_delta.iter_mut())
                        .zip(g)
                    {
                        *eg = rho * *eg + (1.0 - rho) * g * g;
                        let delta = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
                        *ed = rho * *ed + (1.0 - rho) * delta * delta;
                        *w += delta;
                    }
                }
            }
        }
        Ok(())
    }
}
