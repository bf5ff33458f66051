//! Adam with bias correction.

use crate::numerics::Tensor;
use crate::sep::{OptimizerMoments, ParamSet};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub struct Adam {
    pub step_count: usize,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Adam {
        Adam {
            step_count: 0,
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn from_moments(moments: OptimizerMoments, step_count: usize) -> Adam {
        Adam { step_count, m: moments.m, v: moments.v }
    }

    pub fn moments(&self) -> OptimizerMoments {
        OptimizerMoments { m: self.m.clone(), v: self.v.clone() }
    }

    /// One bias-corrected update from the gradients accumulated in `params`.
    /// Gradients are left untouched; callers zero them between steps.
    pub fn step(&mut self, params: &mut ParamSet, lr: f64) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            for ((mj, vj), (&gj, pj)) in m
                .iter_mut()
                .zip(v.iter_mut())
                .zip(g.iter().zip(p.value.data_mut().iter_mut()))
            {
                *mj = BETA1 * *mj + (1.0 - BETA1) * gj;
                *vj = BETA2 * *vj + (1.0 - BETA2) * gj * gj;
                let m_hat = *mj / bc1;
                let v_hat = *vj / bc2;
                *pj -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Scale gradients down to a global L2 norm of `max_norm` when they exceed it.
pub fn clip_global_norm(params: &mut ParamSet, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for p in params.iter() {
        sq += p.grad.data().iter().map(|g| g * g).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            for g in p.grad.data_mut() {
                *g *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param_set(value: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("p", &[1], 1, 0);
        ps.get_mut("p").value.data_mut()[0] = value;
        ps
    }

    #[test]
    fn first_step_is_bias_corrected_lr() {
        // p=0, g=1, lr=0.1: m_hat = 1, v_hat = 1 -> p ~ -0.1
        let mut ps = one_param_set(0.0);
        ps.get_mut("p").grad.data_mut()[0] = 1.0;
        let mut adam = Adam::new(&ps);
        adam.step(&mut ps, 0.1);
        let got = ps.get("p").value.data()[0];
        assert!((got + 0.1).abs() < 1e-7, "got {}", got);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_noop_on_values() {
        let mut ps = one_param_set(0.7);
        let mut adam = Adam::new(&ps);
        adam.step(&mut ps, 0.1);
        assert_eq!(ps.get("p").value.data()[0], 0.7);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn identical_runs_produce_identical_bytes() {
        let run = || {
            let mut ps = one_param_set(0.3);
            let mut adam = Adam::new(&ps);
            for k in 0..5 {
                ps.zero_grads();
                ps.get_mut("p").grad.data_mut()[0] = (k as f64 * 0.37).sin();
                adam.step(&mut ps, 2e-4);
            }
            ps.get("p").value.data()[0].to_le_bytes()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clip_rescales_only_above_threshold() {
        let mut ps = ParamSet::new();
        ps.add("a", &[2], 2, 0);
        ps.get_mut("a").grad.data_mut().copy_from_slice(&[3.0, 4.0]);
        let norm = clip_global_norm(&mut ps, 10.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert_eq!(ps.get("a").grad.data(), &[3.0, 4.0]);
        let _ = clip_global_norm(&mut ps, 2.5);
        assert!((ps.get("a").grad.data()[0] - 1.5).abs() < 1e-12);
        assert!((ps.get("a").grad.data()[1] - 2.0).abs() < 1e-12);
    }
}
