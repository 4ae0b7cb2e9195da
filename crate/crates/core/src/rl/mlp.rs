//! Small dense networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its row-major weight matrix (`out × in`) followed by its bias. Gradients
//! use the same layout, which keeps the optimiser, target-network averaging
//! and checkpointing down to slice operations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Outputs of every layer from one forward pass, input first.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().unwrap()
    }
}

fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Network with the given layer sizes. `activations` has one entry per
    /// weight layer.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "{} layer sizes need {} activations, got {}",
                sizes.len(),
                sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; n_params(sizes)],
        })
    }

    /// Hidden layers share `hidden`; the last layer uses `output`. Weights
    /// are uniform in ±1/√fan_in, except the output layer which starts in
    /// ±`final_scale` so initial outputs sit near zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        final_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut acts = vec![hidden; sizes.len() - 1];
        *acts.last_mut().unwrap() = output;
        let mut net = Self::zeros(sizes, &acts).expect("valid layer sizes");
        let n_layers = sizes.len() - 1;
        let mut offset = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = if l + 1 == n_layers {
                final_scale
            } else {
                1.0 / (w[0] as f64).sqrt()
            };
            let count = w[0] * w[1] + w[1];
            for p in &mut net.params[offset..offset + count] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += count;
        }
        net
    }

    pub fn from_parts(sizes: Vec<usize>, activations: Vec<Activation>, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(&sizes, &activations)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.activations == other.activations
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).outputs.pop().unwrap()
    }

    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        assert_eq!(input.len(), self.sizes[0], "input width");
        let mut outputs = Vec::with_capacity(self.sizes.len());
        outputs.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = outputs.last().unwrap();
            let act = self.activations[l];
            let y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    act.apply(z)
                })
                .collect();
            outputs.push(y);
            offset += n_in * n_out + n_out;
        }
        ForwardCache { outputs }
    }

    /// Backpropagates `grad_output` (dL/d output) through a cached pass.
    /// Parameter gradients are added into `grad_params`; the gradient with
    /// respect to the input is returned.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grad_params: &mut [f64]) -> Result<Vec<f64>> {
        if grad_output.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} entries, network emits {}",
                grad_output.len(),
                self.output_dim()
            )));
        }
        if grad_params.len() != self.params.len() || cache.outputs.len() != self.sizes.len() {
            return Err(Error::ShapeMismatch("gradient buffer or cache does not match network".into()));
        }
        let mut offsets = Vec::with_capacity(self.sizes.len() - 1);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta: Vec<f64> = grad_output.to_vec();
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activations[l];
            let y = &cache.outputs[l + 1];
            let x = &cache.outputs[l];
            for (d, yo) in delta.iter_mut().zip(y) {
                *d *= act.derivative_from_output(*yo);
            }
            let base = offsets[l];
            let weights = &self.params[base..base + n_in * n_out];
            let (gw, gb) = grad_params[base..base + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row_g = &mut gw[o * n_in..(o + 1) * n_in];
                let row_w = &weights[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    row_g[i] += d * x[i];
                    next[i] += d * row_w[i];
                }
            }
            delta = next;
        }
        Ok(delta)
    }
}

/// Polyak averaging `target ← τ·online + (1-τ)·target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::ShapeMismatch(format!(
            "soft update between {:?} and {:?}",
            target.sizes, online.sizes
        )));
    }
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

/// Scales `grad` down so its Euclidean norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[4, 3, 2], &[Activation::Relu, Activation::Tanh]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]), vec![0.0, 0.0]);
    }

    #[test]
    fn bad_shapes_are_rejected() {
        assert!(Mlp::zeros(&[4, 3, 2], &[Activation::Relu]).is_err());
        assert!(Mlp::from_parts(vec![2, 2], vec![Activation::Identity], vec![0.0; 5]).is_err());
        let net = Mlp::zeros(&[2, 2], &[Activation::Identity]).unwrap();
        let cache = net.forward_cached(&[1.0, 1.0]);
        let mut g = vec![0.0; 6];
        assert!(net.backward(&cache, &[1.0], &mut g).is_err());
        let mut other = Mlp::zeros(&[2, 3], &[Activation::Identity]).unwrap();
        assert!(soft_update(&mut other, &net, 0.5).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 5, 2], Activation::Relu, Activation::Tanh, 0.5, &mut rng);
        let cache = net.forward_cached(&[0.1, -0.4, 0.9]);
        let mut g = vec![0.0; net.params().len()];
        let gin = net.backward(&cache, &[0.0, 0.0], &mut g).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(gin.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_output_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, 0.5, &mut rng);
        let cache = net.forward_cached(&[0.3, 0.2, -0.7]);
        let run = |go: &[f64]| {
            let mut g = vec![0.0; net.params().len()];
            net.backward(&cache, go, &mut g).unwrap();
            g
        };
        let a = run(&[1.0, 0.0]);
        let b = run(&[0.0, 1.0]);
        let ab = run(&[2.0, -3.0]);
        for i in 0..a.len() {
            assert!((ab[i] - (2.0 * a[i] - 3.0 * b[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_update_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let online = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, 0.3, &mut rng);
        let original = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, 0.3, &mut rng);

        let mut t = original.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, original);
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t.params(), online.params());

        // gap shrinks by (1 - τ) per update
        let mut t = original.clone();
        let tau = 0.1;
        for k in 1..=50 {
            soft_update(&mut t, &online, tau).unwrap();
            let expected = (1.0 - tau as f64).powi(k);
            for i in 0..t.params().len() {
                let gap0 = original.params()[i] - online.params()[i];
                let gap = t.params()[i] - online.params()[i];
                assert!((gap - gap0 * expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        clip_grad_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.3, 0.4]);
    }
}
