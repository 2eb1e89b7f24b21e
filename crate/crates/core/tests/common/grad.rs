//! Finite-difference gradient checks. Every layer has a plain f64 reference
//! forward written here from the textbook definition; central differences
//! of that reference are compared with the f32 analytic backward pass.
//!
//! Relative error is |a - n| / max(|a|, |n|, FLOOR). The floor keeps
//! near-zero entries from turning f32 rounding into huge ratios.

use r2d2::nn::ops::{self, ConvSpec, Padding, PoolSpec};
use r2d2::nn::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;
pub const FLOOR: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;

pub fn rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let a = a as f64;
            (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
        })
        .fold(0.0, f64::max)
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + H;
            let plus = f(&x);
            x[i] = orig - H;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * H)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Rounds through f32 so the oracle and the kernel see identical inputs.
fn quantize(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

fn tensor(shape: &[usize], v: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), to_f32(v)).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---- reference layers -------------------------------------------------

pub fn conv_ref(x: &[f64], dims: [usize; 4], spec: &ConvSpec, w: &[f64], b: &[f64]) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = dims;
    let k = spec.kernel;
    let pad = if spec.padding == Padding::Same { k / 2 } else { 0 };
    let oh = (h + 2 * pad - k) / spec.stride + 1;
    let ow = (wd + 2 * pad - k) / spec.stride + 1;
    let o = spec.out_channels;
    let mut out = vec![0.0; n * o * oh * ow];
    for ni in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * spec.stride + ky) as isize - pad as isize;
                                let ix = (ox * spec.stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x[((ni * c + ic) * h + iy as usize) * wd + ix as usize];
                                acc += xv * w[((oc * c + ic) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((ni * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [n, o, oh, ow])
}

pub fn relu_ref(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn maxpool_ref(x: &[f64], dims: [usize; 4], spec: PoolSpec) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = dims;
    let oh = (h + 2 * spec.pad - spec.size) / spec.stride + 1;
    let ow = (w + 2 * spec.pad - spec.size) / spec.stride + 1;
    let mut out = Vec::new();
    for plane in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..spec.size {
                    for dx in 0..spec.size {
                        let iy = (oy * spec.stride + dy) as isize - spec.pad as isize;
                        let ix = (ox * spec.stride + dx) as isize - spec.pad as isize;
                        if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                            best = best.max(x[plane * h * w + iy as usize * w + ix as usize]);
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    (out, [n, c, oh, ow])
}

pub fn gap_ref(x: &[f64], dims: [usize; 4]) -> Vec<f64> {
    let [n, c, h, w] = dims;
    (0..n * c)
        .map(|p| x[p * h * w..(p + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
        .collect()
}

pub fn dense_ref(x: &[f64], n: usize, inp: usize, w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * out];
    for i in 0..n {
        for o in 0..out {
            y[i * out + o] = b[o] + (0..inp).map(|j| x[i * inp + j] * w[o * inp + j]).sum::<f64>();
        }
    }
    y
}

/// Mean cross-entropy of softmax(logits) against integer labels.
pub fn softmax_ce_ref(logits: &[f64], classes: usize, labels: &[usize]) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        let row = &logits[i * classes..(i + 1) * classes];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[labels[i]];
    }
    total / n as f64
}

// ---- checks -------------------------------------------------------------

/// Worst relative error per parameter group of one check.
#[derive(Debug, Clone, Copy, Default)]
pub struct Report {
    pub input: f64,
    pub weight: f64,
    pub bias: f64,
}

impl Report {
    pub fn worst(&self) -> f64 {
        self.input.max(self.weight).max(self.bias)
    }
}

fn random_dims(rng: &mut ChaCha8Rng, min_hw: usize) -> [usize; 4] {
    [
        rng.gen_range(1..=2),
        rng.gen_range(1..=3),
        rng.gen_range(min_hw..min_hw + 4),
        rng.gen_range(min_hw..min_hw + 4),
    ]
}

/// Conv layer with kernel `k`; padding and stride vary with the seed.
pub fn check_conv(seed: u64, k: usize) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = random_dims(&mut rng, k);
    let spec = ConvSpec {
        in_channels: dims[1],
        out_channels: rng.gen_range(1..=4),
        kernel: k,
        stride: rng.gen_range(1..=2),
        padding: if rng.gen_bool(0.5) {
            Padding::Same
        } else {
            Padding::Valid
        },
    };
    let x = quantize(uniform(&mut rng, dims.iter().product(), -1.0, 1.0));
    let w = quantize(uniform(&mut rng, spec.weight_shape().iter().product(), -1.0, 1.0));
    let b = quantize(uniform(&mut rng, spec.out_channels, -1.0, 1.0));
    let (_, odims) = conv_ref(&x, dims, &spec, &w, &b);
    let r = quantize(uniform(&mut rng, odims.iter().product(), -1.0, 1.0));

    let grads = ops::conv2d_backward(
        &tensor(&dims, &x),
        &spec,
        &tensor(&spec.weight_shape(), &w),
        &tensor(&[spec.out_channels], &b),
        &tensor(&odims, &r),
    )
    .unwrap();
    let loss = |x: &[f64], w: &[f64], b: &[f64]| dot(&conv_ref(x, dims, &spec, w, b).0, &r);
    Report {
        input: rel_err(grads.input.data(), &numeric_grad(&x, |v| loss(v, &w, &b))),
        weight: rel_err(grads.weight.data(), &numeric_grad(&w, |v| loss(&x, v, &b))),
        bias: rel_err(grads.bias.data(), &numeric_grad(&b, |v| loss(&x, &w, v))),
    }
}

/// Largest absolute difference between the conv kernel and the reference.
pub fn conv_forward_error(seed: u64, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0);
    let dims = random_dims(&mut rng, k);
    let spec = ConvSpec {
        in_channels: dims[1],
        out_channels: 3,
        kernel: k,
        stride: 1,
        padding: Padding::Same,
    };
    let x = quantize(uniform(&mut rng, dims.iter().product(), -1.0, 1.0));
    let w = quantize(uniform(&mut rng, spec.weight_shape().iter().product(), -1.0, 1.0));
    let b = quantize(uniform(&mut rng, 3, -1.0, 1.0));
    let got = ops::conv2d_forward(
        &tensor(&dims, &x),
        &spec,
        &tensor(&spec.weight_shape(), &w),
        &tensor(&[3], &b),
    )
    .unwrap();
    let (want, _) = conv_ref(&x, dims, &spec, &w, &b);
    got.data()
        .iter()
        .zip(&want)
        .map(|(&g, w)| (g as f64 - w).abs())
        .fold(0.0, f64::max)
}

/// Inputs are at least 0.01 away from the kink so ±H never crosses it.
pub fn check_relu(seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..64);
    let x: Vec<f64> = quantize(
        (0..n)
            .map(|_| {
                let mag = rng.gen_range(0.01..1.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect(),
    );
    let r = quantize(uniform(&mut rng, n, -1.0, 1.0));
    let xt = tensor(&[n], &x);
    let out = ops::relu_forward(&xt);
    let g = ops::relu_backward(&out, &tensor(&[n], &r)).unwrap();
    Report {
        input: rel_err(g.data(), &numeric_grad(&x, |v| dot(&relu_ref(v), &r))),
        ..Report::default()
    }
}

/// Inputs are a shuffled ladder with spacing 0.02, so every pooling
/// window has a unique maximum that ±H cannot dethrone.
pub fn check_maxpool(seed: u64, spec: PoolSpec) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = random_dims(&mut rng, spec.size.max(2));
    let len: usize = dims.iter().product();
    let mut x: Vec<f64> = (0..len).map(|i| (i as f64 - len as f64 / 2.0) * 0.02).collect();
    x.shuffle(&mut rng);
    let x = quantize(x);
    let (_, odims) = maxpool_ref(&x, dims, spec);
    let r = quantize(uniform(&mut rng, odims.iter().product(), -1.0, 1.0));
    let pooled = ops::maxpool_forward(&tensor(&dims, &x), spec).unwrap();
    let g = ops::maxpool_backward(&dims, &pooled.argmax, &tensor(&odims, &r)).unwrap();
    Report {
        input: rel_err(g.data(), &numeric_grad(&x, |v| dot(&maxpool_ref(v, dims, spec).0, &r))),
        ..Report::default()
    }
}

pub fn check_gap(seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = random_dims(&mut rng, 1);
    let x = quantize(uniform(&mut rng, dims.iter().product(), -1.0, 1.0));
    let r = quantize(uniform(&mut rng, dims[0] * dims[1], -1.0, 1.0));
    let g = ops::global_avg_pool_backward(&dims, &tensor(&dims[..2], &r)).unwrap();
    Report {
        input: rel_err(g.data(), &numeric_grad(&x, |v| dot(&gap_ref(v, dims), &r))),
        ..Report::default()
    }
}

pub fn check_dense(seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, inp, out) = (rng.gen_range(1..5), rng.gen_range(1..24), rng.gen_range(1..5));
    let x = quantize(uniform(&mut rng, n * inp, -1.0, 1.0));
    let w = quantize(uniform(&mut rng, out * inp, -1.0, 1.0));
    let b = quantize(uniform(&mut rng, out, -1.0, 1.0));
    let r = quantize(uniform(&mut rng, n * out, -1.0, 1.0));
    let g = ops::dense_backward(&tensor(&[n, inp], &x), &tensor(&[out, inp], &w), &tensor(&[n, out], &r)).unwrap();
    let loss = |x: &[f64], w: &[f64], b: &[f64]| dot(&dense_ref(x, n, inp, w, b, out), &r);
    Report {
        input: rel_err(g.input.data(), &numeric_grad(&x, |v| loss(v, &w, &b))),
        weight: rel_err(g.weight.data(), &numeric_grad(&w, |v| loss(&x, v, &b))),
        bias: rel_err(g.bias.data(), &numeric_grad(&b, |v| loss(&x, &w, v))),
    }
}

pub fn check_softmax_ce(seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, classes) = (rng.gen_range(1..9), rng.gen_range(2..5));
    let logits = quantize(uniform(&mut rng, n * classes, -3.0, 3.0));
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let out = ops::softmax_cross_entropy(&tensor(&[n, classes], &logits), &labels).unwrap();
    let loss_err = (out.loss as f64 - softmax_ce_ref(&logits, classes, &labels)).abs();
    assert!(loss_err < 1e-5, "loss value off by {loss_err}");
    Report {
        input: rel_err(
            out.grad.data(),
            &numeric_grad(&logits, |v| softmax_ce_ref(v, classes, &labels)),
        ),
        ..Report::default()
    }
}

pub type LayerCheck = (&'static str, fn(u64) -> Report);

/// Every layer check with its label, for suites that iterate them all.
pub fn all_checks() -> Vec<LayerCheck> {
    vec![
        ("conv1x1", |s| check_conv(s, 1)),
        ("conv3x3", |s| check_conv(s, 3)),
        ("conv5x5", |s| check_conv(s, 5)),
        ("relu", check_relu),
        ("maxpool2x2", |s| check_maxpool(s, PoolSpec::HALVE)),
        ("maxpool3x3same", |s| check_maxpool(s, PoolSpec::SAME3)),
        ("global_avg_pool", check_gap),
        ("dense", check_dense),
        ("softmax_ce", check_softmax_ce),
    ]
}

/// Whole-network reference forward: mean cross-entropy of the f64 network
/// built from `params` (in `Network::parameters` order).
pub fn network_loss_ref(net: &r2d2::nn::Network, params: &[Vec<f64>], x: &[f64], n: usize, labels: &[usize]) -> f64 {
    let cfg = &net.config;
    let (h, w) = (cfg.input_height, cfg.input_width);
    let conv_relu = |x: &[f64], dims: [usize; 4], spec: &ConvSpec, wi: usize| {
        let (out, d) = conv_ref(x, dims, spec, &params[wi], &params[wi + 1]);
        (relu_ref(&out), d)
    };
    let (stem, d) = conv_relu(x, [n, 3, h, w], &net.stem.spec, 0);
    let (pooled, d) = maxpool_ref(&stem, d, PoolSpec::HALVE);
    let inc = &net.inception;
    let (b1, d1) = conv_relu(&pooled, d, &inc.branch1x1.spec, 2);
    let (r3, dr3) = conv_relu(&pooled, d, &inc.reduce3x3.spec, 4);
    let (c3, d3) = conv_relu(&r3, dr3, &inc.conv3x3.spec, 6);
    let (r5, dr5) = conv_relu(&pooled, d, &inc.reduce5x5.spec, 8);
    let (c5, d5) = conv_relu(&r5, dr5, &inc.conv5x5.spec, 10);
    let (mp, dmp) = maxpool_ref(&pooled, d, PoolSpec::SAME3);
    let (pp, dp) = conv_relu(&mp, dmp, &inc.pool_proj.spec, 12);

    let plane = d[2] * d[3];
    let branches = [(&b1, d1[1]), (&c3, d3[1]), (&c5, d5[1]), (&pp, dp[1])];
    let channels: usize = branches.iter().map(|b| b.1).sum();
    let mut block = Vec::with_capacity(n * channels * plane);
    for ni in 0..n {
        for (data, c) in branches {
            block.extend_from_slice(&data[ni * c * plane..(ni + 1) * c * plane]);
        }
    }
    let features = gap_ref(&block, [n, channels, d[2], d[3]]);
    let logits = dense_ref(&features, n, channels, &params[14], &params[15], 2);
    softmax_ce_ref(&logits, 2, labels)
}
