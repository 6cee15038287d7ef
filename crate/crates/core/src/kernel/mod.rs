//! Native compute kernels for the nine benchmark module kinds, plus the
//! latency measurement harness, device probe, and background load generator.
//!
//! Kernels are straightforward single-threaded f32 implementations: the
//! framework measures their wall-clock latency, it does not compete on
//! throughput. Composite kinds execute their constituent kernels in
//! sequence.

pub mod clock;
pub mod load;
pub mod probe;

use std::fmt;
use std::hint::black_box;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::SamplingConfig;
use clock::Clock;

/// Epsilon added to the running variance in batch-norm inference.
pub const BN_EPS: f32 = 1e-5;

/// The nine benchmark module kinds. Composites run their constituents in
/// sequence (e.g. `conv_bn_relu` is conv, then bn, then relu).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModuleKind {
    AvgPool,
    Bn,
    BnRelu,
    Conv,
    ConvBn,
    ConvBnRelu,
    ConvRelu,
    Linear,
    MaxPool,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; 9] = [
        ModuleKind::AvgPool,
        ModuleKind::Bn,
        ModuleKind::BnRelu,
        ModuleKind::Conv,
        ModuleKind::ConvBn,
        ModuleKind::ConvBnRelu,
        ModuleKind::ConvRelu,
        ModuleKind::Linear,
        ModuleKind::MaxPool,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModuleKind::AvgPool => "avgpool",
            ModuleKind::Bn => "bn",
            ModuleKind::BnRelu => "bn_relu",
            ModuleKind::Conv => "conv",
            ModuleKind::ConvBn => "conv_bn",
            ModuleKind::ConvBnRelu => "conv_bn_relu",
            ModuleKind::ConvRelu => "conv_relu",
            ModuleKind::Linear => "linear",
            ModuleKind::MaxPool => "maxpool",
        }
    }

    pub fn parse(name: &str) -> Option<ModuleKind> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Kinds whose first stage is a convolution.
    pub fn is_convolutional(&self) -> bool {
        matches!(
            self,
            ModuleKind::Conv | ModuleKind::ConvBn | ModuleKind::ConvBnRelu | ModuleKind::ConvRelu
        )
    }

    pub fn is_pooling(&self) -> bool {
        matches!(self, ModuleKind::AvgPool | ModuleKind::MaxPool)
    }

    pub fn is_bn_family(&self) -> bool {
        matches!(self, ModuleKind::Bn | ModuleKind::BnRelu)
    }

    /// Linear modules take 2-D inputs (h = w = 1); everything else is 4-D.
    pub fn takes_spatial_input(&self) -> bool {
        !matches!(self, ModuleKind::Linear)
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ModuleKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModuleKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        ModuleKind::parse(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown module kind `{name}`")))
    }
}

/// NCHW tensor shape. Linear-module tensors use h = w = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorShape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl TensorShape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub fn elements(&self) -> usize {
        self.n * self.c * self.h * self.w
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense NCHW f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: TensorShape,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: TensorShape) -> Self {
        Self { shape, data: vec![0.0; shape.elements()] }
    }

    pub fn from_data(shape: TensorShape, data: Vec<f32>) -> Self {
        assert_eq!(shape.elements(), data.len(), "tensor data length must match shape");
        Self { shape, data }
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        let s = &self.shape;
        self.data[((n * s.c + c) * s.h + y) * s.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f32 {
        let s = self.shape;
        &mut self.data[((n * s.c + c) * s.h + y) * s.w + x]
    }
}

/// One timed measurement: the median of `repeats` timed forward runs after
/// `warmups` discarded runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyMeasurement {
    pub latency_ms: f64,
    pub repeats: usize,
    pub warmups: usize,
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid module config for {kind}: {reason}")]
    InvalidConfig { kind: ModuleKind, reason: String },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: TensorShape, got: TensorShape },
}

/// Convolution stage: no padding, dilation 1, bias included.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub s: usize,
    /// Filter weights, `[c_out][c_in][k][k]` row-major.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Batch-norm stage in inference mode with fixed running statistics.
#[derive(Debug, Clone)]
pub struct BnLayer {
    pub channels: usize,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

/// Pooling stage: window k, stride s, no padding.
#[derive(Debug, Clone)]
pub struct PoolLayer {
    pub k: usize,
    pub s: usize,
}

/// Fully-connected stage. Weights are `[c_out][c_in]` row-major.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// One kernel in a module's execution sequence.
#[derive(Debug, Clone)]
pub enum Stage {
    Conv(ConvLayer),
    Bn(BnLayer),
    Relu,
    MaxPool(PoolLayer),
    AvgPool(PoolLayer),
    Linear(LinearLayer),
}

impl Stage {
    /// Trainable weight parameters carried by this stage. Batch-norm counts
    /// gamma and beta only; running statistics are buffers, not weights.
    pub fn param_count(&self) -> u64 {
        match self {
            Stage::Conv(c) => (c.weight.len() + c.bias.len()) as u64,
            Stage::Bn(b) => (b.gamma.len() + b.beta.len()) as u64,
            Stage::Linear(l) => (l.weight.len() + l.bias.len()) as u64,
            Stage::Relu | Stage::MaxPool(_) | Stage::AvgPool(_) => 0,
        }
    }
}

/// A constructed benchmark module: a sequence of stages plus the exact
/// input shape it was built for.
#[derive(Debug, Clone)]
pub struct ModuleInstance {
    pub kind: ModuleKind,
    pub expected_input: TensorShape,
    pub stages: Vec<Stage>,
}

impl ModuleInstance {
    pub fn param_count(&self) -> u64 {
        self.stages.iter().map(Stage::param_count).sum()
    }
}

/// Output spatial size for a windowed kernel: floor((l - k) / s) + 1.
pub fn conv_output_size(l: usize, k: usize, s: usize) -> usize {
    (l - k) / s + 1
}

fn draw_uniform_pm_half(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.gen::<f32>() - 0.5).collect()
}

fn build_conv_layer(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize, k: usize, s: usize) -> ConvLayer {
    let weight = draw_uniform_pm_half(rng, c_out * c_in * k * k);
    let bias = draw_uniform_pm_half(rng, c_out);
    ConvLayer { c_in, c_out, k, s, weight, bias }
}

fn build_bn_layer(rng: &mut ChaCha8Rng, channels: usize) -> BnLayer {
    let gamma = draw_uniform_pm_half(rng, channels);
    let beta = draw_uniform_pm_half(rng, channels);
    let running_mean = draw_uniform_pm_half(rng, channels);
    // The raw [-0.5, 0.5] draw is shifted so the variance stays positive
    // and sqrt(var + eps) is well defined.
    let running_var = draw_uniform_pm_half(rng, channels).iter().map(|v| v + 1.0).collect();
    BnLayer { channels, gamma, beta, running_mean, running_var }
}

fn build_linear_layer(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize) -> LinearLayer {
    let weight = draw_uniform_pm_half(rng, c_out * c_in);
    let bias = draw_uniform_pm_half(rng, c_out);
    LinearLayer { c_in, c_out, weight, bias }
}

/// Construct a module of the given kind. Weights are drawn from a seeded
/// uniform distribution in [-0.5, 0.5]; pooling kinds carry no weights.
pub fn build_module(kind: ModuleKind, cfg: &SamplingConfig, seed: u64) -> Result<ModuleInstance, KernelError> {
    cfg.validate(kind).map_err(|reason| KernelError::InvalidConfig { kind, reason: reason.to_string() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let expected_input = input_shape_for(kind, cfg);

    let stages = match kind {
        ModuleKind::AvgPool => vec![Stage::AvgPool(PoolLayer { k: cfg.k.unwrap(), s: cfg.s.unwrap() })],
        ModuleKind::MaxPool => vec![Stage::MaxPool(PoolLayer { k: cfg.k.unwrap(), s: cfg.s.unwrap() })],
        ModuleKind::Bn => vec![Stage::Bn(build_bn_layer(&mut rng, cfg.c_in))],
        ModuleKind::BnRelu => vec![Stage::Bn(build_bn_layer(&mut rng, cfg.c_in)), Stage::Relu],
        ModuleKind::Conv => {
            vec![Stage::Conv(build_conv_layer(&mut rng, cfg.c_in, cfg.c_out.unwrap(), cfg.k.unwrap(), cfg.s.unwrap()))]
        }
        ModuleKind::ConvBn => {
            let c_out = cfg.c_out.unwrap();
            vec![
                Stage::Conv(build_conv_layer(&mut rng, cfg.c_in, c_out, cfg.k.unwrap(), cfg.s.unwrap())),
                Stage::Bn(build_bn_layer(&mut rng, c_out)),
            ]
        }
        ModuleKind::ConvBnRelu => {
            let c_out = cfg.c_out.unwrap();
            vec![
                Stage::Conv(build_conv_layer(&mut rng, cfg.c_in, c_out, cfg.k.unwrap(), cfg.s.unwrap())),
                Stage::Bn(build_bn_layer(&mut rng, c_out)),
                Stage::Relu,
            ]
        }
        ModuleKind::ConvRelu => {
            vec![
                Stage::Conv(build_conv_layer(&mut rng, cfg.c_in, cfg.c_out.unwrap(), cfg.k.unwrap(), cfg.s.unwrap())),
                Stage::Relu,
            ]
        }
        ModuleKind::Linear => vec![Stage::Linear(build_linear_layer(&mut rng, cfg.c_in, cfg.c_out.unwrap()))],
    };

    Ok(ModuleInstance { kind, expected_input, stages })
}

/// Input shape the module expects, derived from its sampling config.
pub fn input_shape_for(kind: ModuleKind, cfg: &SamplingConfig) -> TensorShape {
    if kind.takes_spatial_input() {
        let l = cfg.l.unwrap();
        TensorShape::new(cfg.n, cfg.c_in, l, l)
    } else {
        TensorShape::new(cfg.n, cfg.c_in, 1, 1)
    }
}

/// Build a seeded random input tensor matching the module's expected shape.
pub fn build_input(kind: ModuleKind, cfg: &SamplingConfig, seed: u64) -> Tensor {
    let shape = input_shape_for(kind, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_data(shape, draw_uniform_pm_half(&mut rng, shape.elements()))
}

fn forward_conv(layer: &ConvLayer, input: &Tensor) -> Tensor {
    let (n, h, w) = (input.shape.n, input.shape.h, input.shape.w);
    let (k, s) = (layer.k, layer.s);
    let oh = conv_output_size(h, k, s);
    let ow = conv_output_size(w, k, s);
    let mut out = Tensor::zeros(TensorShape::new(n, layer.c_out, oh, ow));
    for b in 0..n {
        for oc in 0..layer.c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = layer.bias[oc];
                    for ic in 0..layer.c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iv = input.at(b, ic, oy * s + ky, ox * s + kx);
                                let wv = layer.weight[((oc * layer.c_in + ic) * k + ky) * k + kx];
                                acc += iv * wv;
                            }
                        }
                    }
                    *out.at_mut(b, oc, oy, ox) = acc;
                }
            }
        }
    }
    out
}

fn forward_bn(layer: &BnLayer, input: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(input.shape);
    let plane = input.shape.h * input.shape.w;
    let per_batch = input.shape.c * plane;
    for c in 0..layer.channels {
        let scale = layer.gamma[c] / (layer.running_var[c] + BN_EPS).sqrt();
        let shift = layer.beta[c] - layer.running_mean[c] * scale;
        for b in 0..input.shape.n {
            let base = b * per_batch + c * plane;
            for i in 0..plane {
                out.data[base + i] = input.data[base + i] * scale + shift;
            }
        }
    }
    out
}

fn forward_relu(input: &Tensor) -> Tensor {
    let data = input.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor { shape: input.shape, data }
}

fn forward_pool(layer: &PoolLayer, input: &Tensor, max: bool) -> Tensor {
    let (n, c, h, w) = (input.shape.n, input.shape.c, input.shape.h, input.shape.w);
    let (k, s) = (layer.k, layer.s);
    let oh = conv_output_size(h, k, s);
    let ow = conv_output_size(w, k, s);
    let mut out = Tensor::zeros(TensorShape::new(n, c, oh, ow));
    let window = (k * k) as f32;
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let v = if max {
                        let mut m = f32::NEG_INFINITY;
                        for ky in 0..k {
                            for kx in 0..k {
                                m = m.max(input.at(b, ch, oy * s + ky, ox * s + kx));
                            }
                        }
                        m
                    } else {
                        let mut acc = 0.0;
                        for ky in 0..k {
                            for kx in 0..k {
                                acc += input.at(b, ch, oy * s + ky, ox * s + kx);
                            }
                        }
                        acc / window
                    };
                    *out.at_mut(b, ch, oy, ox) = v;
                }
            }
        }
    }
    out
}

fn forward_linear(layer: &LinearLayer, input: &Tensor) -> Tensor {
    let n = input.shape.n;
    let mut out = Tensor::zeros(TensorShape::new(n, layer.c_out, 1, 1));
    for b in 0..n {
        for o in 0..layer.c_out {
            let mut acc = layer.bias[o];
            for i in 0..layer.c_in {
                acc += layer.weight[o * layer.c_in + i] * input.data[b * layer.c_in + i];
            }
            out.data[b * layer.c_out + o] = acc;
        }
    }
    out
}

/// Run one stage. Exposed so tests can check composites against their
/// constituent kernels stage by stage.
pub fn forward_stage(stage: &Stage, input: &Tensor) -> Tensor {
    match stage {
        Stage::Conv(l) => forward_conv(l, input),
        Stage::Bn(l) => forward_bn(l, input),
        Stage::Relu => forward_relu(input),
        Stage::MaxPool(l) => forward_pool(l, input, true),
        Stage::AvgPool(l) => forward_pool(l, input, false),
        Stage::Linear(l) => forward_linear(l, input),
    }
}

/// Execute the module on the input. The input shape must match the shape
/// the module was built for.
pub fn forward(module: &ModuleInstance, input: &Tensor) -> Result<Tensor, KernelError> {
    if input.shape != module.expected_input {
        return Err(KernelError::ShapeMismatch { expected: module.expected_input, got: input.shape });
    }
    let mut current = forward_stage(&module.stages[0], input);
    for stage in &module.stages[1..] {
        current = forward_stage(stage, &current);
    }
    Ok(current)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Measure the module's single-forward latency: `warmups` untimed runs,
/// then `repeats` timed runs; returns the median in milliseconds.
///
/// Callers must not run ground-truth measurements concurrently; only the
/// load generator may compete for the CPU while this runs.
pub fn measure_latency(
    module: &ModuleInstance,
    input: &Tensor,
    warmups: usize,
    repeats: usize,
    clock: &dyn Clock,
) -> Result<LatencyMeasurement, KernelError> {
    assert!(warmups >= 1, "measure_latency requires warmups >= 1");
    assert!(repeats >= 3, "measure_latency requires repeats >= 3");
    for _ in 0..warmups {
        black_box(forward(module, input)?);
    }
    let mut samples_ms = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = clock.now();
        black_box(forward(module, input)?);
        let end = clock.now();
        samples_ms.push((end - start).as_secs_f64() * 1e3);
    }
    Ok(LatencyMeasurement { latency_ms: median(&mut samples_ms), repeats, warmups })
}
