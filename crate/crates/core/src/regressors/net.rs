//! Dense feed-forward network engine shared by the MLP baseline and the
//! encoder-decoder model: forward with caching, exact analytic
//! backpropagation, Glorot-uniform init, and an Adam optimizer.
//!
//! All regression math runs in f64 so analytic gradients can be checked
//! against central finite differences at tight tolerances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Smooth L1 loss of a residual: 0.5 r^2 / beta for |r| < beta, else
/// |r| - 0.5 beta.
pub fn smooth_l1(residual: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0);
    let a = residual.abs();
    if a < beta {
        0.5 * residual * residual / beta
    } else {
        a - 0.5 * beta
    }
}

/// Derivative of [`smooth_l1`] with respect to the residual.
pub fn smooth_l1_grad(residual: f64, beta: f64) -> f64 {
    let a = residual.abs();
    if a < beta {
        residual / beta
    } else {
        residual.signum()
    }
}

/// One dense layer; weights are `[out_dim][in_dim]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn glorot(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = (0..in_dim * out_dim).map(|_| rng.gen_range(-limit..limit)).collect();
        Self { in_dim, out_dim, weight, bias: vec![0.0; out_dim] }
    }
}

/// A stack of dense layers with rectifier nonlinearities on all layers
/// except (optionally) the last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub layers: Vec<DenseLayer>,
    /// Rectifier applied after the final layer as well (used by encoders,
    /// whose latent output is a hidden representation, not a head).
    pub relu_output: bool,
}

/// Per-layer activations retained for backprop. `post[0]` is the input;
/// `post[i + 1]` is the output of layer i after its nonlinearity.
pub struct ForwardCache {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().unwrap()
    }
}

/// Gradients mirroring a [`FeedForward`]'s parameters.
#[derive(Debug, Clone)]
pub struct FfGrads {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl FfGrads {
    pub fn zeroed(net: &FeedForward) -> Self {
        Self {
            weight: net.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.weight {
            w.iter_mut().for_each(|g| *g = 0.0);
        }
        for b in &mut self.bias {
            b.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Flatten in the same order as [`FeedForward::params_mut`].
    pub fn push_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weight.iter().zip(&self.bias) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }
}

impl FeedForward {
    /// Build a network with the given layer dims (`dims[0]` is the input
    /// dimension) and Glorot-uniform weights.
    pub fn new(dims: &[usize], relu_output: bool, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "network needs at least one layer");
        let layers = dims.windows(2).map(|w| DenseLayer::glorot(w[0], w[1], rng)).collect();
        Self { layers, relu_output }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().unwrap().in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Mutable references to every parameter, weights then biases per layer.
    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &mut self.layers {
            out.extend(layer.weight.iter_mut());
            out.extend(layer.bias.iter_mut());
        }
        out
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weight);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    fn relu_after(&self, layer_idx: usize) -> bool {
        layer_idx + 1 < self.layers.len() || self.relu_output
    }

    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.in_dim(), "input dimension mismatch");
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = post.last().unwrap();
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                *zo += row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>();
            }
            let activated = if self.relu_after(i) {
                z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(activated);
        }
        ForwardCache { pre, post }
    }

    /// Plain forward without caching.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).output().to_vec()
    }

    /// Backpropagate `d_out` (gradient of the loss w.r.t. the network
    /// output) through the cached pass, accumulating parameter gradients
    /// into `grads`; returns the gradient w.r.t. the network input.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut FfGrads) -> Vec<f64> {
        let mut delta = d_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if self.relu_after(i) {
                for (d, z) in delta.iter_mut().zip(&cache.pre[i]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.post[i];
            for o in 0..layer.out_dim {
                let g = delta[o];
                grads.bias[i][o] += g;
                let row = &mut grads.weight[i][o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, v) in row.iter_mut().zip(input) {
                    *gw += g * v;
                }
            }
            let mut d_in = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let g = delta[o];
                let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (di, w) in d_in.iter_mut().zip(row) {
                    *di += g * w;
                }
            }
            delta = d_in;
        }
        delta
    }
}

/// Adam optimizer over a flat parameter vector.
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, param_count: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            **p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn smooth_l1_matches_definition() {
        assert_eq!(smooth_l1(0.0, 1.0), 0.0);
        assert_eq!(smooth_l1(0.5, 1.0), 0.125);
        assert_eq!(smooth_l1(2.0, 1.0), 1.5);
        assert_eq!(smooth_l1(-2.0, 1.0), 1.5);
    }

    #[test]
    fn smooth_l1_is_continuous_at_beta() {
        let beta = 0.7;
        let inner = smooth_l1(beta - 1e-12, beta);
        let outer = smooth_l1(beta + 1e-12, beta);
        assert!((inner - outer).abs() < 1e-9);
        // Once-differentiable at |r| = beta: both one-sided slopes are 1.
        assert!((smooth_l1_grad(beta - 1e-12, beta) - 1.0).abs() < 1e-9);
        assert_eq!(smooth_l1_grad(beta + 1e-12, beta), 1.0);
    }

    #[test]
    fn forward_of_zero_weights_returns_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = FeedForward::new(&[3, 2], false, &mut rng);
        for w in &mut net.layers[0].weight {
            *w = 0.0;
        }
        net.layers[0].bias = vec![1.5, -2.0];
        assert_eq!(net.forward(&[4.0, 5.0, 6.0]), vec![1.5, -2.0]);
    }

    #[test]
    fn relu_output_flag_controls_final_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = FeedForward::new(&[1, 1], true, &mut rng);
        net.layers[0].weight = vec![1.0];
        net.layers[0].bias = vec![-5.0];
        assert_eq!(net.forward(&[1.0]), vec![0.0]);
        net.relu_output = false;
        assert_eq!(net.forward(&[1.0]), vec![-4.0]);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let na = FeedForward::new(&[4, 8, 1], false, &mut a);
        let nb = FeedForward::new(&[4, 8, 1], false, &mut b);
        assert_eq!(na, nb);
    }

    #[test]
    fn glorot_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = FeedForward::new(&[10, 20], false, &mut rng);
        let limit = (6.0 / 30.0f64).sqrt();
        assert!(net.layers[0].weight.iter().all(|w| w.abs() <= limit));
        assert!(net.layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn adam_descends_on_a_quadratic() {
        // Minimize (p - 3)^2 from p = 0.
        let mut p = 0.0f64;
        let mut adam = Adam::new(0.05, 1);
        for _ in 0..2000 {
            let g = 2.0 * (p - 3.0);
            let mut refs = [&mut p];
            adam.step(&mut refs, &[g]);
        }
        assert!((p - 3.0).abs() < 1e-3, "p = {p}");
    }
}
