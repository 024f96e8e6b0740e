//! The Novograd optimizer and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::tensor::{Scalar, Tensor};

/// Novograd hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NovogradConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for NovogradConfig {
    fn default() -> Self {
        Self {
            beta1: 0.95,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.001,
        }
    }
}

/// Per-group state: one second-moment scalar and one first-moment tensor per
/// parameter tensor, all zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct NovogradState<T: Scalar> {
    pub v: Vec<T>,
    pub m: Vec<Tensor<T>>,
}

impl<T: Scalar> NovogradState<T> {
    pub fn new(shapes: &[&[usize]]) -> Self {
        Self {
            v: vec![T::ZERO; shapes.len()],
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }
}

/// One update: per group g,
/// v <- b2 v + (1 - b2) ||grad||^2;
/// m <- b1 m + (grad / (sqrt(v) + eps) + lambda p);
/// p <- p - lr m.
pub fn novograd_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut NovogradState<T>,
    cfg: &NovogradConfig,
    lr: f64,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.v.len());
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let eps = T::from_f64(cfg.eps);
    let lambda = T::from_f64(cfg.weight_decay);
    let lr = T::from_f64(lr);

    for g in 0..params.len() {
        let grad = grads[g];
        let p = &mut *params[g];
        assert_eq!(p.shape(), grad.shape());

        let sq = grad.sq_norm();
        state.v[g] = b2 * state.v[g] + (T::ONE - b2) * sq;
        let denom = state.v[g].sqrt() + eps;
        let m = &mut state.m[g];
        for i in 0..p.len() {
            let scaled = grad.data()[i] / denom + lambda * p.data()[i];
            m.data_mut()[i] = b1 * m.data()[i] + scaled;
            p.data_mut()[i] -= lr * m.data()[i];
        }
    }
}

/// Cosine annealing from `lr_initial` to `lr_final` over `total_steps`;
/// steps past the end clamp to `lr_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub total_steps: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            lr_initial: 1e-3,
            lr_final: 1e-4,
            total_steps: 1,
        }
    }
}

impl LrSchedule {
    pub fn with_steps(total_steps: usize) -> Self {
        Self {
            total_steps: total_steps.max(1),
            ..Self::default()
        }
    }
}

pub fn cosine_lr(step: usize, schedule: &LrSchedule) -> f64 {
    if step >= schedule.total_steps {
        return schedule.lr_final;
    }
    let frac = step as f64 / schedule.total_steps as f64;
    schedule.lr_final
        + 0.5 * (schedule.lr_initial - schedule.lr_final) * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::with_steps(1000);
        assert_eq!(cosine_lr(0, &s), 1e-3);
        assert_eq!(cosine_lr(1000, &s), 1e-4);
        assert_eq!(cosine_lr(5000, &s), 1e-4);
        assert!((cosine_lr(500, &s) - 5.5e-4).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_monotone_decreasing() {
        let s = LrSchedule::with_steps(200);
        let mut last = f64::INFINITY;
        for step in 0..=200 {
            let lr = cosine_lr(step, &s);
            assert!(lr <= last);
            last = lr;
        }
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut p = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]);
        let g = Tensor::zeros(&[3]);
        let mut state = NovogradState::new(&[&[3]]);
        let cfg = NovogradConfig {
            weight_decay: 0.0,
            ..NovogradConfig::default()
        };
        let before = p.clone();
        novograd_step(&mut [&mut p], &[&g], &mut state, &cfg, 1e-3);
        assert_eq!(p, before);
    }

    #[test]
    fn single_scalar_step_matches_hand_arithmetic() {
        // p = 2, grad = 0.5, zero state
        let mut p = Tensor::from_vec(&[1], vec![2.0f64]);
        let g = Tensor::from_vec(&[1], vec![0.5f64]);
        let mut state = NovogradState::new(&[&[1]]);
        let cfg = NovogradConfig::default();
        novograd_step(&mut [&mut p], &[&g], &mut state, &cfg, 0.01);

        let v = (1.0 - 0.98) * 0.25; // 0.005
        let m = 0.5 / (v.sqrt() + 1e-8) + 0.001 * 2.0;
        let expect = 2.0 - 0.01 * m;
        assert!((state.v[0] - v).abs() < 1e-15);
        assert!((state.m[0].data()[0] - m).abs() < 1e-12);
        assert!((p.data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut p = Tensor::from_vec(&[2], vec![1.0f64, -1.0]);
            let g = Tensor::from_vec(&[2], vec![0.2f64, 0.3]);
            let mut state = NovogradState::new(&[&[2]]);
            let cfg = NovogradConfig::default();
            for _ in 0..5 {
                novograd_step(&mut [&mut p], &[&g], &mut state, &cfg, 1e-3);
            }
            (p, state)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn constant_gradient_moves_monotonically_downhill() {
        let mut p = Tensor::from_vec(&[1], vec![5.0f64]);
        let g = Tensor::from_vec(&[1], vec![1.0f64]);
        let mut state = NovogradState::new(&[&[1]]);
        let cfg = NovogradConfig {
            weight_decay: 0.0,
            ..NovogradConfig::default()
        };
        let mut last = p.data()[0];
        for _ in 0..50 {
            novograd_step(&mut [&mut p], &[&g], &mut state, &cfg, 1e-2);
            assert!(p.data()[0] < last);
            last = p.data()[0];
        }
    }
}
