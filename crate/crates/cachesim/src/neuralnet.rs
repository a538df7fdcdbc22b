//! Minimal dense feedforward network: forward pass, MSE loss, exact
//! backpropagation and plain SGD. 64-bit floats throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Leaky ReLU: `x` for `x >= 0`, `alpha * x` otherwise.
pub fn leaky_relu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x
    }
}

/// Subgradient of the Leaky ReLU, with the x = 0 kink resolved to `alpha`.
fn leaky_relu_deriv(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        alpha
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// Whether the Leaky ReLU is applied after the affine transform.
    pub activated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    /// Leaky ReLU negative slope.
    pub alpha: f64,
}

/// Activations cached by a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (index 0 is the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    preacts: Vec<Vec<f64>>,
}

/// Per-layer gradients, shape-congruent with an `Mlp`.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, other: &GradientSet) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::Shape("gradient layer counts differ".into()));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            if a.len() != b.len() {
                return Err(Error::Shape("gradient weight shapes differ".into()));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Global L2 norm over every weight and bias gradient.
    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for w in &self.weights {
            for x in w {
                sum += x * x;
            }
        }
        for b in &self.biases {
            for x in b {
                sum += x * x;
            }
        }
        sum.sqrt()
    }

    /// Rescale so the global L2 norm is at most `max_norm`.
    pub fn clip_l2_norm(&mut self, max_norm: f64) {
        let norm = self.l2_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= factor;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= factor;
            }
        }
    }
}

/// Mean of squared componentwise differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mse_loss: lengths {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. Hidden layers carry the Leaky
    /// ReLU when `hidden_activated`; the output layer is always affine.
    pub fn init(dims: &[usize], hidden_activated: bool, alpha: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "network needs at least an input and an output dimension".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("layer dimensions must be nonzero".into()));
        }
        if !(alpha >= 0.0) {
            return Err(Error::InvalidArgument("alpha must be >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (in_dim, out_dim) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(Layer {
                in_dim,
                out_dim,
                weights,
                biases: vec![0.0; out_dim],
                activated: hidden_activated && l + 1 < n_layers,
            });
        }
        Ok(Self { layers, alpha })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "forward: input length {} != {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.biases.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let dot: f64 = row.iter().zip(&x).map(|(w, xi)| w * xi).sum();
                *zo += dot;
            }
            let out = if layer.activated {
                z.iter().map(|&v| leaky_relu(v, self.alpha)).collect()
            } else {
                z.clone()
            };
            inputs.push(x);
            preacts.push(z);
            x = out;
        }
        Ok((x, ForwardCache { inputs, preacts }))
    }

    /// Output without the cache, for prediction-only callers.
    pub fn evaluate(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    /// Exact gradients of `mse_loss(forward(input), target)` with respect to
    /// every weight and bias, from the cache of a matching forward call.
    pub fn backward(&self, cache: &ForwardCache, target: &[f64]) -> Result<GradientSet> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_into(cache, target, &mut grads)?;
        Ok(grads)
    }

    /// `backward` accumulating into an existing gradient set (summed, not
    /// overwritten), so batch loops avoid reallocation.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        target: &[f64],
        grads: &mut GradientSet,
    ) -> Result<f64> {
        let n = self.layers.len();
        if cache.inputs.len() != n || cache.preacts.len() != n {
            return Err(Error::Shape("forward cache does not match this network".into()));
        }
        for (layer, (inp, pre)) in self.layers.iter().zip(cache.inputs.iter().zip(&cache.preacts)) {
            if inp.len() != layer.in_dim || pre.len() != layer.out_dim {
                return Err(Error::Shape("forward cache does not match this network".into()));
            }
        }
        let last = &self.layers[n - 1];
        if target.len() != last.out_dim {
            return Err(Error::Shape(format!(
                "backward: target length {} != {}",
                target.len(),
                last.out_dim
            )));
        }

        // Output layer is affine, so the MSE gradient applies directly.
        let pre_out = &cache.preacts[n - 1];
        let m = last.out_dim as f64;
        let mut loss = 0.0;
        let mut delta: Vec<f64> = pre_out
            .iter()
            .zip(target)
            .map(|(p, t)| {
                loss += (p - t) * (p - t);
                2.0 / m * (p - t)
            })
            .collect();
        loss /= m;

        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if layer.activated {
                for (d, z) in delta.iter_mut().zip(&cache.preacts[l]) {
                    *d *= leaky_relu_deriv(*z, self.alpha);
                }
            }
            let input = &cache.inputs[l];
            let gw = &mut grads.weights[l];
            for (o, d) in delta.iter().enumerate() {
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            for (g, d) in grads.biases[l].iter_mut().zip(&delta) {
                *g += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
        Ok(loss)
    }

    /// `theta <- theta - lr * grad` for every parameter.
    pub fn sgd_step(&mut self, grads: &GradientSet, lr: f64) -> Result<()> {
        if grads.weights.len() != self.layers.len() {
            return Err(Error::Shape("sgd_step: gradient layer count mismatch".into()));
        }
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.biases))
        {
            if gw.len() != layer.weights.len() || gb.len() != layer.biases.len() {
                return Err(Error::Shape("sgd_step: gradient shape mismatch".into()));
            }
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(w: &[f64], b: &[f64], in_dim: usize, activated: bool, alpha: f64) -> Mlp {
        Mlp {
            layers: vec![Layer {
                in_dim,
                out_dim: b.len(),
                weights: w.to_vec(),
                biases: b.to_vec(),
                activated,
            }],
            alpha,
        }
    }

    #[test]
    fn leaky_relu_branches() {
        assert_eq!(leaky_relu(2.0, 0.01), 2.0);
        assert_eq!(leaky_relu(0.0, 0.01), 0.0);
        assert!((leaky_relu(-2.0, 0.01) - -0.02).abs() < 1e-15);
    }

    #[test]
    fn forward_identity() {
        let net = single_layer(&[1.0], &[0.0], 1, false, 0.01);
        let (out, _) = net.forward(&[3.0]).unwrap();
        assert_eq!(out, vec![3.0]);
    }

    #[test]
    fn forward_hand_affine() {
        let net = single_layer(&[1.0, 1.0], &[0.5], 2, false, 0.01);
        let (out, _) = net.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![3.5]);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = single_layer(&[1.0], &[0.0], 1, false, 0.01);
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0], &[3.0]).unwrap(), 9.0);
        assert_eq!(mse_loss(&[1.0, 3.0], &[2.0, 5.0]).unwrap(), 2.5);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_zero_loss_zero_gradients() {
        let net = single_layer(&[1.0], &[0.0], 1, false, 0.01);
        let (_, cache) = net.forward(&[1.7]).unwrap();
        let g = net.backward(&cache, &[1.7]).unwrap();
        assert_eq!(g.weights[0], vec![0.0]);
        assert_eq!(g.biases[0], vec![0.0]);
    }

    #[test]
    fn backward_hand_gradient() {
        // Loss (w x + b - t)^2 with w=2, b=0, x=1, t=0: dL/dw = 2*pred*x = 4.
        let net = single_layer(&[2.0], &[0.0], 1, false, 0.01);
        let (out, cache) = net.forward(&[1.0]).unwrap();
        assert_eq!(out, vec![2.0]);
        let g = net.backward(&cache, &[0.0]).unwrap();
        assert!((g.weights[0][0] - 4.0).abs() < 1e-12);
        assert!((g.biases[0][0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut net = Mlp::init(&[3, 5, 4, 2], true, 0.01, 11).unwrap();
        // Nonzero biases so bias gradients are exercised away from zero.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(12);
        for layer in &mut net.layers {
            for b in &mut layer.biases {
                *b = rand::Rng::random_range(&mut rng, -0.5..0.5);
            }
        }
        let input = [0.3, -0.7, 1.2];
        let target = [0.5, -0.25];
        let (_, cache) = net.forward(&input).unwrap();
        let grads = net.backward(&cache, &target).unwrap();

        let eps = 1e-5;
        for l in 0..net.layers.len() {
            for i in 0..net.layers[l].weights.len() {
                let orig = net.layers[l].weights[i];
                net.layers[l].weights[i] = orig + eps;
                let hi = mse_loss(&net.evaluate(&input).unwrap(), &target).unwrap();
                net.layers[l].weights[i] = orig - eps;
                let lo = mse_loss(&net.evaluate(&input).unwrap(), &target).unwrap();
                net.layers[l].weights[i] = orig;
                let fd = (hi - lo) / (2.0 * eps);
                let g = grads.weights[l][i];
                let denom = fd.abs().max(g.abs()).max(1e-8);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "layer {l} weight {i}: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn sgd_step_cases() {
        let mut net = single_layer(&[1.0], &[0.0], 1, false, 0.01);
        let g = GradientSet {
            weights: vec![vec![2.0]],
            biases: vec![vec![1.0]],
        };
        net.sgd_step(&g, 0.0).unwrap();
        assert_eq!(net.layers[0].weights[0], 1.0);
        net.sgd_step(&g, 0.1).unwrap();
        assert!((net.layers[0].weights[0] - 0.8).abs() < 1e-12);
        // Two steps with g equal one step with 2g.
        let mut a = single_layer(&[1.0], &[0.0], 1, false, 0.01);
        let mut b = single_layer(&[1.0], &[0.0], 1, false, 0.01);
        a.sgd_step(&g, 0.1).unwrap();
        a.sgd_step(&g, 0.1).unwrap();
        let mut g2 = g.clone();
        g2.scale(2.0);
        b.sgd_step(&g2, 0.1).unwrap();
        assert!((a.layers[0].weights[0] - b.layers[0].weights[0]).abs() < 1e-12);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::init(&[5, 128, 128, 1], true, 0.01, 99).unwrap();
        let b = Mlp::init(&[5, 128, 128, 1], true, 0.01, 99).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.weights, lb.weights);
            assert!(la.biases.iter().all(|&x| x == 0.0));
            let limit = (6.0 / (la.in_dim + la.out_dim) as f64).sqrt();
            assert!(la.weights.iter().all(|w| w.abs() <= limit));
        }
        assert!(Mlp::init(&[], true, 0.01, 0).is_err());
    }

    #[test]
    fn training_on_fixed_batch_decreases_loss() {
        let mut net = Mlp::init(&[2, 8, 1], true, 0.01, 5).unwrap();
        let batch = [([0.5, 1.0], [2.0]), ([-0.3, 0.2], [1.0]), ([1.5, -1.0], [0.0])];
        let loss_of = |net: &Mlp| -> f64 {
            batch
                .iter()
                .map(|(x, t)| mse_loss(&net.evaluate(x).unwrap(), t).unwrap())
                .sum::<f64>()
                / batch.len() as f64
        };
        let mut prev = loss_of(&net);
        for _ in 0..10 {
            let mut grads = GradientSet::zeros_like(&net);
            for (x, t) in &batch {
                let (_, cache) = net.forward(x).unwrap();
                net.backward_into(&cache, t, &mut grads).unwrap();
            }
            grads.scale(1.0 / batch.len() as f64);
            net.sgd_step(&grads, 1e-6).unwrap();
            let cur = loss_of(&net);
            assert!(cur < prev, "loss did not decrease: {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn affine_network_superposition() {
        // With all activations disabled the network is affine:
        // f(x + y) + f(0) = f(x) + f(y).
        let net = Mlp::init(&[3, 4, 2], false, 0.01, 21).unwrap();
        let x = [0.2, -1.0, 0.7];
        let y = [1.1, 0.4, -0.3];
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let fx = net.evaluate(&x).unwrap();
        let fy = net.evaluate(&y).unwrap();
        let fxy = net.evaluate(&xy).unwrap();
        let f0 = net.evaluate(&[0.0; 3]).unwrap();
        for i in 0..2 {
            assert!((fxy[i] + f0[i] - fx[i] - fy[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Mlp::init(&[4, 8, 1], true, 0.01, 3).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        for (a, b) in net.layers.iter().zip(&back.layers) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.biases, b.biases);
        }
    }
}
