//! Adam optimizer and gradient clipping over named parameter sets.

use std::collections::BTreeMap;

use crate::parallel::chunked_sum;
use crate::tensor::Shape;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One named parameter: current values plus Adam moment buffers.
#[derive(Clone, Debug)]
pub struct Param {
    pub shape: Shape,
    pub data: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Param {
    pub fn new(shape: Shape, data: Vec<f64>) -> Self {
        let n = data.len();
        assert_eq!(shape.0 * shape.1, n);
        Self {
            shape,
            data,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Ordered map of named parameters. Iteration order (BTreeMap) is fixed, so
/// clipping and updates are deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    pub params: BTreeMap<String, Param>,
    /// Step counter for bias correction.
    pub t: u64,
}

impl ParamSet {
    pub fn insert(&mut self, name: impl Into<String>, shape: Shape, data: Vec<f64>) {
        self.params.insert(name.into(), Param::new(shape, data));
    }

    pub fn get(&self, name: &str) -> &Param {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn n_scalars(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    /// Global L2 norm of a gradient map (over all named entries).
    pub fn grad_norm(grads: &BTreeMap<String, Vec<f64>>) -> f64 {
        let mut acc = 0.0;
        for g in grads.values() {
            let sq: Vec<f64> = g.iter().map(|x| x * x).collect();
            acc += chunked_sum(&sq);
        }
        acc.sqrt()
    }

    /// Scale all gradients so the global norm is at most `max_norm`.
    pub fn clip_global_norm(grads: &mut BTreeMap<String, Vec<f64>>, max_norm: f64) -> f64 {
        let norm = Self::grad_norm(grads);
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in grads.values_mut() {
                for x in g.iter_mut() {
                    *x *= s;
                }
            }
        }
        norm
    }

    /// One Adam step with bias correction. Missing gradient entries leave the
    /// corresponding parameters (and their moments) untouched.
    pub fn adam_step(&mut self, grads: &BTreeMap<String, Vec<f64>>, cfg: &AdamConfig) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (name, p) in self.params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            assert_eq!(g.len(), p.data.len(), "gradient shape mismatch for {name}");
            for i in 0..p.data.len() {
                p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g[i];
                p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = p.m[i] / bc1;
                let vhat = p.v[i] / bc2;
                p.data[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ParamSet {
        let mut ps = ParamSet::default();
        ps.insert("w", (1, 1), vec![v]);
        ps
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut ps = single(0.7);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![0.0]);
        ps.adam_step(&grads, &AdamConfig::default());
        assert_eq!(ps.get("w").data[0], 0.7);
    }

    #[test]
    fn first_step_matches_bias_corrected_recurrence() {
        // g = 1, lr = 1e-3: update = -lr * (m/bc1) / (sqrt(v/bc2) + eps)
        //                          = -1e-3 * 1 / (1 + 1e-8) ~ -9.99999e-4
        let mut ps = single(0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![1.0]);
        ps.adam_step(&grads, &AdamConfig::default());
        let w = ps.get("w").data[0];
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((w - expected).abs() < 1e-12, "got {w}, want {expected}");
    }

    #[test]
    fn constant_gradient_converges_to_lr_sign_steps() {
        let mut ps = single(0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![2.5]);
        let cfg = AdamConfig::default();
        let mut prev = 0.0;
        let mut delta = 0.0;
        for _ in 0..5000 {
            ps.adam_step(&grads, &cfg);
            let w = ps.get("w").data[0];
            delta = w - prev;
            prev = w;
        }
        // Fixed point of the recurrence for a constant gradient: -lr*sign(g).
        assert!(
            (delta + cfg.lr).abs() < 1e-6,
            "per-step update {delta} should approach {}",
            -cfg.lr
        );
    }

    #[test]
    fn clip_reduces_norm() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), vec![3.0, 4.0]); // norm 5
        let norm = ParamSet::clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped = ParamSet::grad_norm(&grads);
        assert!((clipped - 1.0).abs() < 1e-12);
    }
}
