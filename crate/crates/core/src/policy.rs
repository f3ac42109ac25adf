//! Action heads that turn a policy network's output into actions.
//!
//! TD3 policies end in a `tanh` layer and act deterministically. SAC-family
//! policies emit `[mean, log_std]` and act through a tanh-squashed Gaussian;
//! their deterministic action is `tanh(mean)`.

use crate::error::{Error, Result};
use crate::ndnet::{self, NetSpec};
use crate::seeding::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyHead {
    Deterministic,
    SquashedGaussian,
}

impl PolicyHead {
    /// Width of the network output for `action_dim` actions.
    pub fn output_dim(self, action_dim: usize) -> usize {
        match self {
            PolicyHead::Deterministic => action_dim,
            PolicyHead::SquashedGaussian => 2 * action_dim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvalMode {
    Deterministic,
    Stochastic,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Deterministic => "deterministic",
            EvalMode::Stochastic => "stochastic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "deterministic" => Some(EvalMode::Deterministic),
            "stochastic" => Some(EvalMode::Stochastic),
            _ => None,
        }
    }
}

/// Anything that can pick an action for a state.
pub trait Actor {
    fn act(&self, state: &[f64], mode: EvalMode, rng: &mut Rng) -> Result<Vec<f64>>;
}

/// A policy network paired with its action head.
#[derive(Clone, Copy)]
pub struct NetPolicy<'a> {
    pub spec: &'a NetSpec,
    pub params: &'a [f64],
    pub head: PolicyHead,
}

impl Actor for NetPolicy<'_> {
    fn act(&self, state: &[f64], mode: EvalMode, rng: &mut Rng) -> Result<Vec<f64>> {
        let out = ndnet::forward(self.spec, self.params, state, None)?;
        match self.head {
            PolicyHead::Deterministic => Ok(out),
            PolicyHead::SquashedGaussian => {
                let dim = out.len() / 2;
                match mode {
                    EvalMode::Deterministic => Ok(out[..dim].iter().map(|m| m.tanh()).collect()),
                    EvalMode::Stochastic => {
                        let noise: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                        Ok(squashed_sample(&out[..dim], &out[dim..], &noise).action)
                    }
                }
            }
        }
    }
}

/// Reparameterized draw from a tanh-squashed Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// `exp(clamped log_std)`.
    pub std: Vec<f64>,
    /// Whether each raw log-std was inside the clamp range.
    pub log_std_active: Vec<bool>,
}

/// `log(1 - tanh(u)^2)` without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// `a = tanh(mean + std * noise)` and its log-density with the tanh correction.
pub fn squashed_sample(mean: &[f64], raw_log_std: &[f64], noise: &[f64]) -> SquashedSample {
    let dim = mean.len();
    let mut action = Vec::with_capacity(dim);
    let mut std = Vec::with_capacity(dim);
    let mut active = Vec::with_capacity(dim);
    let mut log_prob = 0.0;
    for i in 0..dim {
        let raw = raw_log_std[i];
        let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
        let s = ls.exp();
        let u = mean[i] + s * noise[i];
        log_prob += -0.5 * noise[i] * noise[i] - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        action.push(u.tanh());
        std.push(s);
        active.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
    }
    SquashedSample {
        action,
        log_prob,
        std,
        log_std_active: active,
    }
}

/// Gradient of `alpha * log_prob - sum_i dq_da[i] * action[i]` (first order in
/// the action) with respect to `[mean, raw_log_std]`.
///
/// This is the per-sample upstream for the SAC actor objective, where `dq_da`
/// is the critic's action gradient at the sampled action.
pub fn squashed_objective_grad(sample: &SquashedSample, noise: &[f64], alpha: f64, dq_da: &[f64]) -> Vec<f64> {
    let dim = sample.action.len();
    let mut grad = vec![0.0; 2 * dim];
    for i in 0..dim {
        let a = sample.action[i];
        // d log_prob / du = 2 tanh(u); d a / du = 1 - a^2
        let d_u = alpha * 2.0 * a - dq_da[i] * (1.0 - a * a);
        grad[i] = d_u;
        grad[dim + i] = if sample.log_std_active[i] {
            -alpha + d_u * sample.std[i] * noise[i]
        } else {
            0.0
        };
    }
    grad
}

/// Gradient of `log_prob` alone with respect to `[mean, raw_log_std]`.
pub fn log_prob_grad(sample: &SquashedSample, noise: &[f64]) -> Vec<f64> {
    squashed_objective_grad(sample, noise, 1.0, &vec![0.0; sample.action.len()])
}

/// Output width check shared by every consumer of a policy network.
pub fn check_head(spec: &NetSpec, head: PolicyHead, action_dim: usize) -> Result<()> {
    if spec.output_dim() != head.output_dim(action_dim) {
        return Err(Error::spec(format!(
            "policy emits {} values, {:?} head over {} actions needs {}",
            spec.output_dim(),
            head,
            action_dim,
            head.output_dim(action_dim)
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_log_density(u: f64, mean: f64, ls: f64) -> f64 {
        let s = ls.exp();
        -0.5 * ((u - mean) / s).powi(2) - ls - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn log_prob_matches_change_of_variables() {
        let (mean, ls, xi) = (0.3, -0.4, 0.8);
        let s = squashed_sample(&[mean], &[ls], &[xi]);
        let u = mean + ls.exp() * xi;
        let direct = gaussian_log_density(u, mean, ls) - (1.0 - u.tanh().powi(2)).ln();
        assert!((s.log_prob - direct).abs() < 1e-12);
        assert!((s.action[0] - u.tanh()).abs() < 1e-15);
    }

    #[test]
    fn stable_log_jacobian_for_large_inputs() {
        for u in [-40.0, -5.0, 0.0, 5.0, 40.0] {
            let v = log_one_minus_tanh_sq(u);
            assert!(v.is_finite());
            if u.abs() < 10.0 {
                assert!((v - (1.0 - u.tanh().powi(2)).ln()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let s = squashed_sample(&[0.0], &[9.0], &[0.0]);
        assert!((s.std[0] - LOG_STD_MAX.exp()).abs() < 1e-12);
        assert!(!s.log_std_active[0]);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let mean = [0.2, -0.7];
        let ls = [-0.3, 0.5];
        let noise = [0.9, -1.1];
        let dq = [0.4, -2.0];
        let alpha = 0.37;
        // Linearized objective: alpha * logp - <dq, a>.
        let f = |m: &[f64], l: &[f64]| {
            let s = squashed_sample(m, l, &noise);
            alpha * s.log_prob - s.action.iter().zip(&dq).map(|(a, d)| a * d).sum::<f64>()
        };
        let s = squashed_sample(&mean, &ls, &noise);
        let g = squashed_objective_grad(&s, &noise, alpha, &dq);
        let h = 1e-6;
        for i in 0..2 {
            let mut mp = mean;
            mp[i] += h;
            let mut mm = mean;
            mm[i] -= h;
            let num = (f(&mp, &ls) - f(&mm, &ls)) / (2.0 * h);
            assert!((num - g[i]).abs() < 1e-7, "mean {i}: {num} vs {}", g[i]);
            let mut lp = ls;
            lp[i] += h;
            let mut lm = ls;
            lm[i] -= h;
            let num = (f(&mean, &lp) - f(&mean, &lm)) / (2.0 * h);
            assert!((num - g[2 + i]).abs() < 1e-7, "log_std {i}: {num} vs {}", g[2 + i]);
        }
    }
}
