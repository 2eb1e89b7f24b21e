//! Scalar quadratic f(w) = w² driven through the real optimizer, and the
//! same update rules written out in f64 as an oracle.

use r2d2::nn::{Optimizer, OptimizerConfig, OptimizerKind, Tensor};

/// The configuration each optimizer uses on the quadratic.
pub fn quadratic_config(kind: OptimizerKind) -> OptimizerConfig {
    match kind {
        OptimizerKind::AdaGrad => OptimizerConfig::new(kind).with_learning_rate(0.1),
        _ => OptimizerConfig::new(kind),
    }
}

/// Trajectory of w over `steps` updates from w0, gradient 2w taken at the
/// point `begin_step` moves to.
pub fn run(config: OptimizerConfig, w0: f32, steps: usize) -> Vec<f32> {
    let mut w = Tensor::new(vec![1], vec![w0]).unwrap();
    let mut opt = Optimizer::new(config, [&w]);
    let mut out = vec![w0];
    for _ in 0..steps {
        opt.begin_step(&mut [&mut w]).unwrap();
        let g = Tensor::new(vec![1], vec![2.0 * w.data()[0]]).unwrap();
        opt.step(&mut [&mut w], &[g]).unwrap();
        out.push(w.data()[0]);
    }
    out
}

/// The stated update rules on the scalar quadratic, in f64.
pub fn oracle(config: OptimizerConfig, w0: f64, steps: usize) -> Vec<f64> {
    let lr = config.learning_rate as f64;
    let mu = config.momentum as f64;
    let rho = config.rho as f64;
    let eps = config.epsilon as f64;
    let (mut w, mut v, mut acc, mut eg, mut ed) = (w0, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut out = vec![w];
    for _ in 0..steps {
        match config.kind {
            OptimizerKind::Sgd => w -= lr * 2.0 * w,
            OptimizerKind::Nag => {
                v = mu * v - lr * 2.0 * (w + mu * v);
                w += v;
            }
            OptimizerKind::AdaGrad => {
                let g = 2.0 * w;
                acc += g * g;
                w -= lr * g / (acc.sqrt() + eps);
            }
            OptimizerKind::AdaDelta => {
                let g = 2.0 * w;
                eg = rho * eg + (1.0 - rho) * g * g;
                let d = -((ed + eps).sqrt() / (eg + eps).sqrt()) * g;
                ed = rho * ed + (1.0 - rho) * d * d;
                w += d;
            }
        }
        out.push(w);
    }
    out
}

/// First step index at which |w| < 0.1.
pub fn steps_to_converge(trajectory: &[f32]) -> Option<usize> {
    trajectory.iter().position(|w| w.abs() < 0.1)
}
