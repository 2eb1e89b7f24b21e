//! Stem conv → 2x2 max-pool → inception-lite block → global average pool →
//! dense → softmax over {benign, malicious}.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::{self, ConvGrads, ConvSpec, PoolSpec};
use super::{NnError, Tensor};
use crate::pixel::RgbImage;
use crate::Label;

pub const CLASSES: usize = 2;

/// A conv layer followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvRelu {
    pub spec: ConvSpec,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvRelu {
    /// He-uniform weights (limit √(6 / fan_in)), zero bias.
    pub fn he_uniform(spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        let limit = (6.0 / fan_in as f32).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let weight = Tensor::new(
            spec.weight_shape(),
            (0..spec.out_channels * fan_in).map(|_| dist.sample(rng)).collect(),
        )
        .expect("weight shape");
        ConvRelu {
            spec,
            weight,
            bias: Tensor::zeros(vec![spec.out_channels]),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        Ok(ops::relu_forward(&ops::conv2d_forward(
            x,
            &self.spec,
            &self.weight,
            &self.bias,
        )?))
    }

    fn backward(&self, input: &Tensor, output: &Tensor, grad_out: &Tensor) -> Result<ConvGrads, NnError> {
        let g = ops::relu_backward(output, grad_out)?;
        ops::conv2d_backward(input, &self.spec, &self.weight, &self.bias, &g)
    }
}

/// Output channels of the four inception branches and the two reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InceptionConfig {
    pub branch1x1: usize,
    pub reduce3x3: usize,
    pub out3x3: usize,
    pub reduce5x5: usize,
    pub out5x5: usize,
    pub pool_proj: usize,
}

impl Default for InceptionConfig {
    fn default() -> Self {
        InceptionConfig {
            branch1x1: 4,
            reduce3x3: 4,
            out3x3: 8,
            reduce5x5: 2,
            out5x5: 4,
            pool_proj: 4,
        }
    }
}

impl InceptionConfig {
    pub fn out_channels(&self) -> usize {
        self.branch1x1 + self.out3x3 + self.out5x5 + self.pool_proj
    }

    /// Parameters (weights + biases) of the block for `in_channels` inputs.
    pub fn parameter_count(&self, in_channels: usize) -> usize {
        self.specs(in_channels).iter().map(ConvSpec::parameter_count).sum()
    }

    /// Parameters of the same block with the 1x1 reductions removed: the
    /// 3x3 and 5x5 convolutions read all `in_channels` directly.
    pub fn unreduced_parameter_count(&self, in_channels: usize) -> usize {
        [
            ConvSpec::same(in_channels, self.branch1x1, 1),
            ConvSpec::same(in_channels, self.out3x3, 3),
            ConvSpec::same(in_channels, self.out5x5, 5),
            ConvSpec::same(in_channels, self.pool_proj, 1),
        ]
        .iter()
        .map(ConvSpec::parameter_count)
        .sum()
    }

    /// Specs in parameter order: 1x1, reduce3, 3x3, reduce5, 5x5, pool proj.
    fn specs(&self, c: usize) -> [ConvSpec; 6] {
        [
            ConvSpec::same(c, self.branch1x1, 1),
            ConvSpec::same(c, self.reduce3x3, 1),
            ConvSpec::same(self.reduce3x3, self.out3x3, 3),
            ConvSpec::same(c, self.reduce5x5, 1),
            ConvSpec::same(self.reduce5x5, self.out5x5, 5),
            ConvSpec::same(c, self.pool_proj, 1),
        ]
    }
}

/// Four parallel branches concatenated on the channel axis:
/// 1x1 | 1x1→3x3 | 1x1→5x5 | 3x3 max-pool→1x1. Every conv is followed by
/// ReLU and every branch preserves H and W.
#[derive(Debug, Clone, PartialEq)]
pub struct InceptionLite {
    pub branch1x1: ConvRelu,
    pub reduce3x3: ConvRelu,
    pub conv3x3: ConvRelu,
    pub reduce5x5: ConvRelu,
    pub conv5x5: ConvRelu,
    pub pool_proj: ConvRelu,
}

#[derive(Debug, Clone)]
pub struct InceptionCache {
    input: Tensor,
    b1: Tensor,
    r3: Tensor,
    c3: Tensor,
    r5: Tensor,
    c5: Tensor,
    pooled: Tensor,
    pool_argmax: Vec<usize>,
    pp: Tensor,
}

impl InceptionLite {
    pub fn new(in_channels: usize, config: InceptionConfig, rng: &mut ChaCha8Rng) -> Self {
        let [s1, s2, s3, s4, s5, s6] = config.specs(in_channels);
        InceptionLite {
            branch1x1: ConvRelu::he_uniform(s1, rng),
            reduce3x3: ConvRelu::he_uniform(s2, rng),
            conv3x3: ConvRelu::he_uniform(s3, rng),
            reduce5x5: ConvRelu::he_uniform(s4, rng),
            conv5x5: ConvRelu::he_uniform(s5, rng),
            pool_proj: ConvRelu::he_uniform(s6, rng),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.branch1x1.spec.out_channels
            + self.conv3x3.spec.out_channels
            + self.conv5x5.spec.out_channels
            + self.pool_proj.spec.out_channels
    }

    fn layers(&self) -> [&ConvRelu; 6] {
        [
            &self.branch1x1,
            &self.reduce3x3,
            &self.conv3x3,
            &self.reduce5x5,
            &self.conv5x5,
            &self.pool_proj,
        ]
    }

    fn layers_mut(&mut self) -> [&mut ConvRelu; 6] {
        [
            &mut self.branch1x1,
            &mut self.reduce3x3,
            &mut self.conv3x3,
            &mut self.reduce5x5,
            &mut self.conv5x5,
            &mut self.pool_proj,
        ]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, InceptionCache), NnError> {
        let b1 = self.branch1x1.forward(x)?;
        let r3 = self.reduce3x3.forward(x)?;
        let c3 = self.conv3x3.forward(&r3)?;
        let r5 = self.reduce5x5.forward(x)?;
        let c5 = self.conv5x5.forward(&r5)?;
        let pool = ops::maxpool_forward(x, PoolSpec::SAME3)?;
        let pp = self.pool_proj.forward(&pool.output)?;
        let out = concat_channels(&[&b1, &c3, &c5, &pp])?;
        Ok((
            out,
            InceptionCache {
                input: x.clone(),
                b1,
                r3,
                c3,
                r5,
                c5,
                pooled: pool.output,
                pool_argmax: pool.argmax,
                pp,
            },
        ))
    }

    /// Returns the input gradient and the six conv gradients in parameter
    /// order.
    pub fn backward(&self, cache: &InceptionCache, grad_out: &Tensor) -> Result<(Tensor, Vec<ConvGrads>), NnError> {
        let widths = [
            self.branch1x1.spec.out_channels,
            self.conv3x3.spec.out_channels,
            self.conv5x5.spec.out_channels,
            self.pool_proj.spec.out_channels,
        ];
        let [g1, g3, g5, gp]: [Tensor; 4] = split_channels(grad_out, &widths)?.try_into().expect("four branches");

        let d1 = self.branch1x1.backward(&cache.input, &cache.b1, &g1)?;
        let d3 = self.conv3x3.backward(&cache.r3, &cache.c3, &g3)?;
        let dr3 = self.reduce3x3.backward(&cache.input, &cache.r3, &d3.input)?;
        let d5 = self.conv5x5.backward(&cache.r5, &cache.c5, &g5)?;
        let dr5 = self.reduce5x5.backward(&cache.input, &cache.r5, &d5.input)?;
        let dp = self.pool_proj.backward(&cache.pooled, &cache.pp, &gp)?;
        let dpool = ops::maxpool_backward(cache.input.shape(), &cache.pool_argmax, &dp.input)?;

        let mut grad_in = d1.input.clone();
        for part in [&dr3.input, &dr5.input, &dpool] {
            for (acc, &v) in grad_in.data_mut().iter_mut().zip(part.data()) {
                *acc += v;
            }
        }
        Ok((grad_in, vec![d1, dr3, d3, dr5, d5, dp]))
    }
}

pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor, NnError> {
    let (n, _, h, w) = parts[0].dims4()?;
    let mut total_c = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(NnError::ShapeMismatch(format!(
                "cannot concat {:?} with {:?}",
                parts[0].shape(),
                p.shape()
            )));
        }
        total_c += pc;
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * total_c * hw);
    for i in 0..n {
        for p in parts {
            let pc = p.shape()[1];
            data.extend_from_slice(&p.data()[i * pc * hw..(i + 1) * pc * hw]);
        }
    }
    Tensor::new(vec![n, total_c, h, w], data)
}

pub fn split_channels(t: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>, NnError> {
    let (n, c, h, w) = t.dims4()?;
    if widths.iter().sum::<usize>() != c {
        return Err(NnError::ShapeMismatch(format!(
            "cannot split {c} channels into {widths:?}"
        )));
    }
    let hw = h * w;
    let mut parts: Vec<Vec<f32>> = widths.iter().map(|&wd| Vec::with_capacity(n * wd * hw)).collect();
    for i in 0..n {
        let mut offset = i * c * hw;
        for (part, &wd) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&t.data()[offset..offset + wd * hw]);
            offset += wd * hw;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(data, &wd)| Tensor::new(vec![n, wd, h, w], data))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_width: usize,
    pub input_height: usize,
    pub stem_channels: usize,
    pub inception: InceptionConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_width: 64,
            input_height: 64,
            stem_channels: 8,
            inception: InceptionConfig::default(),
        }
    }
}

impl NetworkConfig {
    pub fn with_input(mut self, width: usize, height: usize) -> Self {
        self.input_width = width;
        self.input_height = height;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let i = &self.inception;
        let widths = [
            self.stem_channels,
            i.branch1x1,
            i.reduce3x3,
            i.out3x3,
            i.reduce5x5,
            i.out5x5,
            i.pool_proj,
        ];
        if self.input_width < 2 || self.input_height < 2 || widths.contains(&0) {
            return Err(NnError::ShapeMismatch(format!("invalid network config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub stem: ConvRelu,
    pub inception: InceptionLite,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

/// Intermediates kept by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Tensor,
    stem_out: Tensor,
    pooled_shape: Vec<usize>,
    pool_argmax: Vec<usize>,
    inception: InceptionCache,
    block_shape: Vec<usize>,
    features: Tensor,
}

impl Network {
    /// He-uniform convolutions, zero dense head, all drawn from `seed`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = ConvRelu::he_uniform(ConvSpec::same(3, config.stem_channels, 3), &mut rng);
        let inception = InceptionLite::new(config.stem_channels, config.inception, &mut rng);
        let features = inception.out_channels();
        Ok(Network {
            config,
            stem,
            inception,
            head_weight: Tensor::zeros(vec![CLASSES, features]),
            head_bias: Tensor::zeros(vec![CLASSES]),
        })
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.stem.weight, &self.stem.bias];
        for l in self.inception.layers() {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.stem.weight, &mut self.stem.bias];
        for l in self.inception.layers_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        let (_, c, h, w) = x.dims4()?;
        if c != 3 || h != self.config.input_height || w != self.config.input_width {
            return Err(NnError::WrongInputSize {
                expected: (self.config.input_width, self.config.input_height),
                actual: (w, h),
            });
        }
        Ok(())
    }

    /// Logits (N x 2) plus the cache for [`Network::backward`].
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), NnError> {
        self.check_input(x)?;
        let stem_out = self.stem.forward(x)?;
        let pool = ops::maxpool_forward(&stem_out, PoolSpec::HALVE)?;
        let (block, inception) = self.inception.forward(&pool.output)?;
        let features = ops::global_avg_pool_forward(&block)?;
        let logits = ops::dense_forward(&features, &self.head_weight, &self.head_bias)?;
        Ok((
            logits,
            ForwardCache {
                input: x.clone(),
                stem_out,
                pooled_shape: pool.output.shape().to_vec(),
                pool_argmax: pool.argmax,
                inception,
                block_shape: block.shape().to_vec(),
                features,
            },
        ))
    }

    /// Gradients for every parameter, in [`Network::parameters`] order.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let head = ops::dense_backward(&cache.features, &self.head_weight, grad_logits)?;
        let g_block = ops::global_avg_pool_backward(&cache.block_shape, &head.input)?;
        let (g_pooled, block_grads) = self.inception.backward(&cache.inception, &g_block)?;
        debug_assert_eq!(g_pooled.shape(), cache.pooled_shape.as_slice());
        let g_stem = ops::maxpool_backward(cache.stem_out.shape(), &cache.pool_argmax, &g_pooled)?;
        let stem = self.stem.backward(&cache.input, &cache.stem_out, &g_stem)?;

        let mut grads = vec![stem.weight, stem.bias];
        for g in block_grads {
            grads.push(g.weight);
            grads.push(g.bias);
        }
        grads.push(head.weight);
        grads.push(head.bias);
        Ok(grads)
    }

    /// Class probabilities, N x 2.
    pub fn probabilities(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (logits, _) = self.forward(x)?;
        ops::softmax(&logits)
    }

    /// Probability that `image` is malicious. The image must already be at
    /// the network input size.
    pub fn predict(&self, image: &RgbImage) -> Result<f32, NnError> {
        let x = images_to_tensor(&[image])?;
        let p = self.probabilities(&x)?;
        Ok(p.data()[Label::Malicious.index()])
    }
}

/// Stacks same-size images into an N x 3 x H x W tensor, channels scaled
/// from [0, 255] to [−1, 1].
pub fn images_to_tensor(images: &[&RgbImage]) -> Result<Tensor, NnError> {
    let first = images.first().ok_or(NnError::EmptyDataset)?;
    let (w, h) = (first.width(), first.height());
    let hw = w * h;
    let mut data = vec![0.0f32; images.len() * 3 * hw];
    for (i, img) in images.iter().enumerate() {
        if img.width() != w || img.height() != h {
            return Err(NnError::WrongInputSize {
                expected: (w, h),
                actual: (img.width(), img.height()),
            });
        }
        let sample = &mut data[i * 3 * hw..(i + 1) * 3 * hw];
        for (p, rgb) in img.as_bytes().chunks_exact(3).enumerate() {
            for ch in 0..3 {
                sample[ch * hw + p] = rgb[ch] as f32 / 127.5 - 1.0;
            }
        }
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}
