//! Categorical return distributions on a fixed atom support.

use serde::{Deserialize, Serialize};

/// Evenly spaced atoms `v_min, …, v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: usize,
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, atoms: usize) -> Self {
        assert!(atoms >= 2 && v_max > v_min, "degenerate support");
        Self { v_min, v_max, atoms }
    }

    /// Support symmetric around zero covering every discounted return of
    /// per-step rewards in [-1, 1].
    pub fn for_discount(gamma: f64, atoms: usize) -> Self {
        let bound = 1.0 / (1.0 - gamma);
        Self::new(-bound, bound, atoms)
    }

    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms - 1) as f64
    }

    pub fn atom(&self, i: usize) -> f64 {
        self.v_min + i as f64 * self.delta()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.atoms).map(|i| self.atom(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueDistribution {
    pub support: Support,
    pub probs: Vec<f64>,
}

impl ValueDistribution {
    pub fn from_logits(support: Support, logits: &[f64]) -> Self {
        Self {
            support,
            probs: softmax(logits),
        }
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| p * self.support.atom(i)).sum()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Projects the Bellman-shifted distribution `reward + γⁿ·Z` back onto the
/// support. Mass that lands between two atoms is split linearly; targets
/// outside the support are clamped to its ends. A terminal transition
/// collapses the distribution onto the reward.
pub fn categorical_project(reward_n: f64, done: bool, next_probs: &[f64], gamma_n: f64, support: &Support) -> Vec<f64> {
    let mut out = vec![0.0; support.atoms];
    let dz = support.delta();
    let scale = if done { 0.0 } else { gamma_n };
    for (j, p) in next_probs.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let tz = (reward_n + scale * support.atom(j)).clamp(support.v_min, support.v_max);
        let b = ((tz - support.v_min) / dz).clamp(0.0, (support.atoms - 1) as f64);
        let l = b.floor() as usize;
        let u = b.ceil() as usize;
        if l == u {
            out[l] += p;
        } else {
            out[l] += p * (u as f64 - b);
            out[u] += p * (b - l as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0; 5]);
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn terminal_collapses_onto_reward_atom() {
        let s = Support::new(-10.0, 10.0, 21);
        let next = softmax(&[0.3; 21]);
        let out = categorical_project(3.0, true, &next, 0.9, &s);
        assert!((out[13] - 1.0).abs() < 1e-12);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // γ = 0 behaves the same way
        let out = categorical_project(3.0, false, &next, 0.0, &s);
        assert!((out[13] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_mass_is_clamped() {
        let s = Support::new(-1.0, 1.0, 3);
        let out = categorical_project(5.0, false, &[0.2, 0.3, 0.5], 1.0, &s);
        assert_eq!(out, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn support_from_discount() {
        let s = Support::for_discount(0.99, 51);
        assert!((s.v_min + 100.0).abs() < 1e-9 && (s.v_max - 100.0).abs() < 1e-9);
        assert!((s.delta() - 4.0).abs() < 1e-9);
    }
}
