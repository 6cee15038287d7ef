//! Multi-task encoder-decoder network: a shared encoder, a latency
//! prediction decoder, and (except in the direct variant) an input
//! reconstruction decoder trained jointly under a weighted-sum loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{smooth_l1, smooth_l1_grad, FeedForward, FfGrads};
use crate::kernel::ModuleKind;

/// Encoder widths and reconstruction:prediction loss weight ratio. The
/// latent dimension is the last encoder entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MednConfig {
    pub encoder_hidden: Vec<usize>,
    pub weight_ratio: f64,
}

impl MednConfig {
    /// Per-kind defaults. Composite kinds use their dominant constituent's
    /// configuration.
    pub fn default_for(kind: ModuleKind) -> Self {
        match kind {
            ModuleKind::AvgPool => Self { encoder_hidden: vec![64, 32, 16], weight_ratio: 0.001 },
            ModuleKind::Bn | ModuleKind::BnRelu => Self { encoder_hidden: vec![32, 16, 8], weight_ratio: 1.0 },
            ModuleKind::Conv | ModuleKind::ConvBn | ModuleKind::ConvBnRelu | ModuleKind::ConvRelu => {
                Self { encoder_hidden: vec![128, 64, 32], weight_ratio: 100.0 }
            }
            ModuleKind::Linear => Self { encoder_hidden: vec![64, 32, 16], weight_ratio: 0.01 },
            ModuleKind::MaxPool => Self { encoder_hidden: vec![64, 32, 16], weight_ratio: 0.01 },
        }
    }

    pub fn latent_dim(&self) -> usize {
        *self.encoder_hidden.last().expect("encoder_hidden must not be empty")
    }

    /// Prediction decoder dims: halve from the latent down to 2, then a
    /// scalar head (latent 32 -> [32, 16, 8, 4, 2, 1]).
    pub fn prediction_decoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.latent_dim()];
        let mut cur = self.latent_dim();
        while cur > 2 {
            cur /= 2;
            dims.push(cur);
        }
        dims.push(1);
        dims
    }

    /// Reconstruction decoder dims: the exact reverse of the encoder's.
    pub fn reconstruction_decoder_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims: Vec<usize> = self.encoder_hidden.iter().rev().copied().collect();
        dims.push(input_dim);
        dims
    }

    /// Encoder dims including the input dimension.
    pub fn encoder_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(&self.encoder_hidden);
        dims
    }
}

/// Joint loss: `weight_ratio * mean_i smooth_l1(recon_i - x_i) +
/// smooth_l1(pred - target)`. The prediction weight is fixed at 1.
pub fn medn_loss(
    pred: f64,
    target: f64,
    recon: Option<(&[f64], &[f64])>,
    weight_ratio: f64,
    beta: f64,
) -> f64 {
    let (recon_part, pred_part) = medn_loss_parts(pred, target, recon, beta);
    weight_ratio * recon_part + pred_part
}

/// The two loss terms separately (reconstruction mean, prediction); the
/// reconstruction part is 0 when no reconstruction output exists.
pub fn medn_loss_parts(pred: f64, target: f64, recon: Option<(&[f64], &[f64])>, beta: f64) -> (f64, f64) {
    let pred_part = smooth_l1(pred - target, beta);
    let recon_part = match recon {
        Some((recon, x)) => {
            assert_eq!(recon.len(), x.len(), "reconstruction length mismatch");
            recon.iter().zip(x).map(|(r, v)| smooth_l1(r - v, beta)).sum::<f64>() / x.len() as f64
        }
        None => 0.0,
    };
    (recon_part, pred_part)
}

/// One forward pass through the full model.
#[derive(Debug, Clone)]
pub struct MednOutput {
    pub latent: Vec<f64>,
    pub prediction: f64,
    pub reconstruction: Option<Vec<f64>>,
}

/// The trainable model. `reconstruction` is `None` for the direct variant.
#[derive(Debug, Clone, PartialEq)]
pub struct MednModel {
    pub encoder: FeedForward,
    pub prediction: FeedForward,
    pub reconstruction: Option<FeedForward>,
    pub weight_ratio: f64,
}

/// Gradient buffers mirroring [`MednModel`].
pub struct MednGrads {
    pub encoder: FfGrads,
    pub prediction: FfGrads,
    pub reconstruction: Option<FfGrads>,
}

impl MednModel {
    /// Build with seeded Glorot-uniform weights. `direct` omits the
    /// reconstruction decoder entirely.
    pub fn new(input_dim: usize, cfg: &MednConfig, direct: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = FeedForward::new(&cfg.encoder_dims(input_dim), true, &mut rng);
        let prediction = FeedForward::new(&cfg.prediction_decoder_dims(), false, &mut rng);
        let reconstruction =
            (!direct).then(|| FeedForward::new(&cfg.reconstruction_decoder_dims(input_dim), false, &mut rng));
        Self { encoder, prediction, reconstruction, weight_ratio: cfg.weight_ratio }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn is_direct(&self) -> bool {
        self.reconstruction.is_none()
    }

    pub fn forward_full(&self, x: &[f64]) -> MednOutput {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let latent = self.encoder.forward(x);
        let prediction = self.prediction.forward(&latent)[0];
        let reconstruction = self.reconstruction.as_ref().map(|net| net.forward(&latent));
        MednOutput { latent, prediction, reconstruction }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward_full(x).prediction
    }

    /// Loss terms for one sample: (reconstruction mean, prediction).
    pub fn loss_parts(&self, x: &[f64], target: f64, beta: f64) -> (f64, f64) {
        let out = self.forward_full(x);
        medn_loss_parts(out.prediction, target, out.reconstruction.as_deref().map(|r| (r, x)), beta)
    }

    pub fn loss(&self, x: &[f64], target: f64, beta: f64) -> f64 {
        let (recon, pred) = self.loss_parts(x, target, beta);
        self.weight_ratio * recon + pred
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.prediction.param_count()
            + self.reconstruction.as_ref().map_or(0, |n| n.param_count())
    }

    /// Every parameter in a fixed order: encoder, prediction decoder,
    /// reconstruction decoder.
    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut out = self.encoder.params_mut();
        out.extend(self.prediction.params_mut());
        if let Some(net) = &mut self.reconstruction {
            out.extend(net.params_mut());
        }
        out
    }

    pub fn zero_grads(&self) -> MednGrads {
        MednGrads {
            encoder: FfGrads::zeroed(&self.encoder),
            prediction: FfGrads::zeroed(&self.prediction),
            reconstruction: self.reconstruction.as_ref().map(FfGrads::zeroed),
        }
    }

    /// Accumulate `coef`-weighted gradients of the joint loss for one
    /// sample; returns the unweighted sample loss.
    pub fn accumulate(&self, x: &[f64], target: f64, beta: f64, coef: f64, grads: &mut MednGrads) -> f64 {
        let enc_cache = self.encoder.forward_cached(x);
        let latent = enc_cache.output().to_vec();
        let pred_cache = self.prediction.forward_cached(&latent);
        let pred = pred_cache.output()[0];

        let d_pred_out = vec![coef * smooth_l1_grad(pred - target, beta)];
        let mut d_latent = self.prediction.backward(&pred_cache, &d_pred_out, &mut grads.prediction);

        let mut recon_part = 0.0;
        if let Some(net) = &self.reconstruction {
            let recon_cache = net.forward_cached(&latent);
            let recon = recon_cache.output();
            let dim = x.len() as f64;
            let d_recon_out: Vec<f64> = recon
                .iter()
                .zip(x)
                .map(|(r, v)| coef * self.weight_ratio * smooth_l1_grad(r - v, beta) / dim)
                .collect();
            recon_part = recon.iter().zip(x).map(|(r, v)| smooth_l1(r - v, beta)).sum::<f64>() / dim;
            let d_latent_recon =
                net.backward(&recon_cache, &d_recon_out, grads.reconstruction.as_mut().unwrap());
            for (a, b) in d_latent.iter_mut().zip(&d_latent_recon) {
                *a += b;
            }
        }

        self.encoder.backward(&enc_cache, &d_latent, &mut grads.encoder);
        self.weight_ratio * recon_part + smooth_l1(pred - target, beta)
    }

    /// Flatten gradients in [`Self::params_mut`] order.
    pub fn flatten_grads(&self, grads: &MednGrads, out: &mut Vec<f64>) {
        out.clear();
        grads.encoder.push_flat(out);
        grads.prediction.push_flat(out);
        if let Some(g) = &grads.reconstruction {
            g.push_flat(out);
        }
    }
}

/// Multi-layer perceptron baseline: dense stack with rectifier hidden
/// layers and a scalar linear head, trained on smooth L1.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: FeedForward,
}

impl MlpModel {
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Self { net: FeedForward::new(&dims, false, &mut rng) }
    }

    pub fn input_dim(&self) -> usize {
        self.net.in_dim()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.net.forward(x)[0]
    }

    pub fn loss(&self, x: &[f64], target: f64, beta: f64) -> f64 {
        smooth_l1(self.predict(x) - target, beta)
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        self.net.params_mut()
    }

    pub fn zero_grads(&self) -> FfGrads {
        FfGrads::zeroed(&self.net)
    }

    pub fn accumulate(&self, x: &[f64], target: f64, beta: f64, coef: f64, grads: &mut FfGrads) -> f64 {
        let cache = self.net.forward_cached(x);
        let pred = cache.output()[0];
        let d_out = vec![coef * smooth_l1_grad(pred - target, beta)];
        self.net.backward(&cache, &d_out, grads);
        smooth_l1(pred - target, beta)
    }

    pub fn flatten_grads(&self, grads: &FfGrads, out: &mut Vec<f64>) {
        out.clear();
        grads.push_flat(out);
    }
}
