//! Forward and backward kernels for every layer type. All tensors are NCHW
//! (or N x features for the dense head).

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `kernel / 2` on every side.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: Padding::Same,
        }
    }

    pub fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => self.kernel / 2,
            Padding::Valid => 0,
        }
    }

    /// Output extent along one axis: (in + 2·pad − k) / stride + 1.
    pub fn output_dim(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.pad();
        if padded < self.kernel || self.stride == 0 {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn parameter_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !matches!(self.kernel, 1 | 3 | 5) || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(NnError::ShapeMismatch(format!("invalid conv spec {self:?}")));
        }
        Ok(())
    }
}

/// Output positions `o` in `[lo, hi)` for which `o·stride + offset − pad`
/// lands inside `[0, input)`.
fn valid_range(offset: usize, pad: usize, stride: usize, input: usize, output: usize) -> (usize, usize) {
    let lo = if offset >= pad {
        0
    } else {
        (pad - offset).div_ceil(stride)
    };
    let hi = if input + pad > offset {
        ((input + pad - offset - 1) / stride + 1).min(output)
    } else {
        0
    };
    (lo.min(hi), hi)
}

struct ConvGeometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(input: &Tensor, spec: &ConvSpec, weight: &Tensor, bias: &Tensor) -> Result<ConvGeometry, NnError> {
    spec.validate()?;
    let (n, c, h, w) = input.dims4()?;
    if c != spec.in_channels {
        return Err(NnError::ShapeMismatch(format!(
            "conv expects {} input channels, got {c}",
            spec.in_channels
        )));
    }
    if weight.shape() != spec.weight_shape().as_slice() || bias.shape() != [spec.out_channels] {
        return Err(NnError::ShapeMismatch(format!(
            "conv parameters {:?}/{:?} do not match spec {spec:?}",
            weight.shape(),
            bias.shape()
        )));
    }
    let (oh, ow) = match (spec.output_dim(h), spec.output_dim(w)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => return Err(NnError::ShapeMismatch(format!("{h}x{w} input too small for {spec:?}"))),
    };
    Ok(ConvGeometry { n, c, h, w, oh, ow })
}

/// Cross-correlation of `input` with `weight` (O x C x k x k) plus `bias`.
pub fn conv2d_forward(input: &Tensor, spec: &ConvSpec, weight: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let g = conv_geometry(input, spec, weight, bias)?;
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad());
    let o_ch = spec.out_channels;
    let mut out = vec![0.0f32; g.n * o_ch * g.oh * g.ow];
    let x = input.data();
    let wt = weight.data();

    let ranges_y: Vec<_> = (0..k).map(|ky| valid_range(ky, p, s, g.h, g.oh)).collect();
    let ranges_x: Vec<_> = (0..k).map(|kx| valid_range(kx, p, s, g.w, g.ow)).collect();

    for n in 0..g.n {
        for o in 0..o_ch {
            let plane = &mut out[(n * o_ch + o) * g.oh * g.ow..][..g.oh * g.ow];
            plane.fill(bias.data()[o]);
            for c in 0..g.c {
                let in_plane = &x[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
                let kern = &wt[(o * g.c + c) * k * k..][..k * k];
                for ky in 0..k {
                    let (y0, y1) = ranges_y[ky];
                    for kx in 0..k {
                        let wv = kern[ky * k + kx];
                        let (x0, x1) = ranges_x[kx];
                        if x0 >= x1 {
                            continue;
                        }
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let out_row = &mut plane[oy * g.ow..][x0..x1];
                            let in_row = &in_plane[iy * g.w..][..g.w];
                            if s == 1 {
                                let ix0 = x0 + kx - p;
                                for (o_v, &i_v) in out_row.iter_mut().zip(&in_row[ix0..ix0 + (x1 - x0)]) {
                                    *o_v += wv * i_v;
                                }
                            } else {
                                for (j, o_v) in out_row.iter_mut().enumerate() {
                                    *o_v += wv * in_row[(x0 + j) * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.n, o_ch, g.oh, g.ow], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    spec: &ConvSpec,
    weight: &Tensor,
    bias: &Tensor,
    grad_out: &Tensor,
) -> Result<ConvGrads, NnError> {
    let g = conv_geometry(input, spec, weight, bias)?;
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad());
    let o_ch = spec.out_channels;
    if grad_out.shape() != [g.n, o_ch, g.oh, g.ow] {
        return Err(NnError::ShapeMismatch(format!(
            "conv upstream gradient {:?}, expected {:?}",
            grad_out.shape(),
            [g.n, o_ch, g.oh, g.ow]
        )));
    }
    let x = input.data();
    let wt = weight.data();
    let go = grad_out.data();
    let mut gx = vec![0.0f32; x.len()];
    let mut gw = vec![0.0f32; wt.len()];
    let mut gb = vec![0.0f32; o_ch];

    let ranges_y: Vec<_> = (0..k).map(|ky| valid_range(ky, p, s, g.h, g.oh)).collect();
    let ranges_x: Vec<_> = (0..k).map(|kx| valid_range(kx, p, s, g.w, g.ow)).collect();

    for n in 0..g.n {
        for o in 0..o_ch {
            let g_plane = &go[(n * o_ch + o) * g.oh * g.ow..][..g.oh * g.ow];
            gb[o] += g_plane.iter().sum::<f32>();
            for c in 0..g.c {
                let base = (n * g.c + c) * g.h * g.w;
                let in_plane = &x[base..base + g.h * g.w];
                let gin_plane = &mut gx[base..base + g.h * g.w];
                let kbase = (o * g.c + c) * k * k;
                for ky in 0..k {
                    let (y0, y1) = ranges_y[ky];
                    for kx in 0..k {
                        let (x0, x1) = ranges_x[kx];
                        if x0 >= x1 {
                            continue;
                        }
                        let wv = wt[kbase + ky * k + kx];
                        let mut acc = 0.0f32;
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let g_row = &g_plane[oy * g.ow..][x0..x1];
                            if s == 1 {
                                let ix0 = iy * g.w + x0 + kx - p;
                                let in_row = &in_plane[ix0..ix0 + (x1 - x0)];
                                for (&gv, &iv) in g_row.iter().zip(in_row) {
                                    acc += gv * iv;
                                }
                                let gin_row = &mut gin_plane[ix0..ix0 + (x1 - x0)];
                                for (gi, &gv) in gin_row.iter_mut().zip(g_row) {
                                    *gi += wv * gv;
                                }
                            } else {
                                for (j, &gv) in g_row.iter().enumerate() {
                                    let ix = iy * g.w + (x0 + j) * s + kx - p;
                                    acc += gv * in_plane[ix];
                                    gin_plane[ix] += wv * gv;
                                }
                            }
                        }
                        gw[kbase + ky * k + kx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weight: Tensor::new(weight.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![o_ch], gb)?,
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Gradient through a ReLU given its forward *output*.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor, NnError> {
    output.same_shape(grad_out)?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub size: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PoolSpec {
    pub const HALVE: PoolSpec = PoolSpec {
        size: 2,
        stride: 2,
        pad: 0,
    };
    /// 3x3, stride 1, spatial dims preserved.
    pub const SAME3: PoolSpec = PoolSpec {
        size: 3,
        stride: 1,
        pad: 1,
    };

    fn output_dim(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.pad;
        (padded >= self.size && self.stride > 0).then(|| (padded - self.size) / self.stride + 1)
    }
}

/// Max-pool output plus, for each output element, the flat input index that
/// won. Padding never wins; ties go to the lowest flat index.
#[derive(Debug, Clone)]
pub struct PoolResult {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

pub fn maxpool_forward(input: &Tensor, spec: PoolSpec) -> Result<PoolResult, NnError> {
    let (n, c, h, w) = input.dims4()?;
    let (oh, ow) = match (spec.output_dim(h), spec.output_dim(w)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(NnError::ShapeMismatch(format!("{h}x{w} input too small for {spec:?}"))),
    };
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let y_start = (oy * spec.stride) as isize - spec.pad as isize;
            for ox in 0..ow {
                let x_start = (ox * spec.stride) as isize - spec.pad as isize;
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for dy in 0..spec.size as isize {
                    let iy = y_start + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for dx in 0..spec.size as isize {
                        let ix = x_start + dx;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = base + iy as usize * w + ix as usize;
                        if best_idx == usize::MAX || x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok(PoolResult {
        output: Tensor::new(vec![n, c, oh, ow], out)?,
        argmax,
    })
}

pub fn maxpool_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor, NnError> {
    if argmax.len() != grad_out.len() {
        return Err(NnError::ShapeMismatch(
            "pool gradient does not match recorded argmax".into(),
        ));
    }
    let mut grad = Tensor::zeros(input_shape.to_vec());
    let g = grad.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    Ok(grad)
}

/// NCHW -> NC mean over the spatial plane.
pub fn global_avg_pool_forward(input: &Tensor) -> Result<Tensor, NnError> {
    let (n, c, h, w) = input.dims4()?;
    let hw = h * w;
    let data = input
        .data()
        .chunks_exact(hw)
        .map(|plane| plane.iter().sum::<f32>() / hw as f32)
        .collect();
    Tensor::new(vec![n, c], data)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor, NnError> {
    let [n, c, h, w] = input_shape[..] else {
        return Err(NnError::ShapeMismatch(format!(
            "expected NCHW shape, got {input_shape:?}"
        )));
    };
    if grad_out.shape() != [n, c] {
        return Err(NnError::ShapeMismatch(format!(
            "gap gradient {:?}, expected [{n}, {c}]",
            grad_out.shape()
        )));
    }
    let hw = h * w;
    let scale = 1.0 / hw as f32;
    let mut data = Vec::with_capacity(n * c * hw);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * scale, hw));
    }
    Tensor::new(input_shape.to_vec(), data)
}

/// y = x·Wᵀ + b with x: N x in, W: out x in.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (n, d_in) = input.dims2()?;
    let (d_out, w_in) = weight.dims2()?;
    if w_in != d_in || bias.shape() != [d_out] {
        return Err(NnError::ShapeMismatch(format!(
            "dense {:?}/{:?} applied to {:?}",
            weight.shape(),
            bias.shape(),
            input.shape()
        )));
    }
    let mut out = Vec::with_capacity(n * d_out);
    for row in input.data().chunks_exact(d_in) {
        for (o, w_row) in weight.data().chunks_exact(d_in).enumerate() {
            let dot: f32 = row.iter().zip(w_row).map(|(a, b)| a * b).sum();
            out.push(dot + bias.data()[o]);
        }
    }
    Tensor::new(vec![n, d_out], out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<DenseGrads, NnError> {
    let (n, d_in) = input.dims2()?;
    let (d_out, _) = weight.dims2()?;
    if grad_out.shape() != [n, d_out] {
        return Err(NnError::ShapeMismatch(format!(
            "dense gradient {:?}, expected [{n}, {d_out}]",
            grad_out.shape()
        )));
    }
    let mut gx = vec![0.0f32; n * d_in];
    let mut gw = vec![0.0f32; d_out * d_in];
    let mut gb = vec![0.0f32; d_out];
    for i in 0..n {
        let x_row = &input.data()[i * d_in..][..d_in];
        let g_row = &grad_out.data()[i * d_out..][..d_out];
        let gx_row = &mut gx[i * d_in..][..d_in];
        for (o, &g) in g_row.iter().enumerate() {
            gb[o] += g;
            let w_row = &weight.data()[o * d_in..][..d_in];
            let gw_row = &mut gw[o * d_in..][..d_in];
            for j in 0..d_in {
                gx_row[j] += g * w_row[j];
                gw_row[j] += g * x_row[j];
            }
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![n, d_in], gx)?,
        weight: Tensor::new(vec![d_out, d_in], gw)?,
        bias: Tensor::new(vec![d_out], gb)?,
    })
}

/// Row-wise softmax of an N x K matrix.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    let (_, k) = logits.dims2()?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// −mean log p[true class].
    pub loss: f32,
    pub probs: Tensor,
    /// (p − onehot) / N.
    pub grad: Tensor,
}

pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<LossOutput, NnError> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n || labels.iter().any(|&l| l >= k) {
        return Err(NnError::ShapeMismatch(format!(
            "{} labels for {n}x{k} logits",
            labels.len()
        )));
    }
    let probs = softmax(logits)?;
    let mut loss = 0.0f32;
    let mut grad = probs.data().to_vec();
    for (i, (row, &label)) in logits.data().chunks_exact(k).zip(labels).enumerate() {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f32>().ln();
        loss += lse - row[label];
        grad[i * k + label] -= 1.0;
    }
    let inv_n = 1.0 / n as f32;
    for g in &mut grad {
        *g *= inv_n;
    }
    Ok(LossOutput {
        loss: loss * inv_n,
        probs,
        grad: Tensor::new(vec![n, k], grad)?,
    })
}
