//! Finite-difference checks of every trainer loss.
//!
//! Each check freezes all randomness (noise and dropout keys), perturbs one
//! parameter at a time and compares the central difference with the analytic
//! gradient. ReLU kinks, clamp edges and near-ties in `min(Q1, Q2)` make
//! central differences meaningless, so probes that land within
//! [`KINK_MARGIN`] of one are reported as skipped rather than scored.

use super::{ActorDraws, Batch, CriticDraws, Family, TrainerConfig, TrainerState};
use crate::datahub::Transition;
use crate::error::Result;
use crate::ndnet::{forward_batch, grad_check, min_relu_margin, Activation, Matrix};
use crate::policy::{LOG_STD_MAX, LOG_STD_MIN};
use crate::seeding::{stream, Purpose, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Td3Critic,
    Td3Actor,
    SacCritic,
    SacActor,
    Alpha,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Td3Critic,
        LossKind::Td3Actor,
        LossKind::SacCritic,
        LossKind::SacActor,
        LossKind::Alpha,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Td3Critic => "td3_critic",
            LossKind::Td3Actor => "td3_actor",
            LossKind::SacCritic => "sac_critic",
            LossKind::SacActor => "sac_actor",
            LossKind::Alpha => "alpha",
        }
    }
}

/// Small trainer with random weights everywhere, including a non-trivial
/// policy output layer so log-std and tanh saturation are exercised.
pub fn probe_trainer(family: Family, critic_activation: Activation, rng: &mut Rng) -> Result<TrainerState> {
    let mut cfg = TrainerConfig::for_family(family);
    cfg.policy_hidden = vec![6, 5];
    cfg.critic_hidden = vec![7, 6];
    cfg.critic_activation = critic_activation;
    cfg.alpha_init = 0.3;
    let mut t = TrainerState::new(cfg, 3, 2, rng)?;
    t.actor = t.actor_spec.init_params(rng, 1.0);
    if let Some(ta) = t.target_actor.as_mut() {
        *ta = t.actor_spec.init_params(rng, 1.0);
    }
    t.target_critic1 = t.critic_spec.init_params(rng, 1.0);
    t.target_critic2 = t.critic_spec.init_params(rng, 1.0);
    Ok(t)
}

pub fn probe_batch(t: &TrainerState, n: usize, rng: &mut Rng) -> Result<Batch> {
    let normal = |k: usize, rng: &mut Rng| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(rng)).collect() };
    let ts: Vec<Transition> = (0..n)
        .map(|_| {
            let s = normal(t.state_dim, rng);
            let a = (0..t.action_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s_next = normal(t.state_dim, rng);
            let r = normal(1, rng)[0];
            Transition::new(s, a, s_next, r, rng.random_bool(0.2))
        })
        .collect();
    Batch::from_transitions(&ts.iter().collect::<Vec<_>>())
}

fn critic_margin(
    t: &TrainerState,
    params: &[f64],
    s: &Matrix,
    a: &Matrix,
    draws_key: Option<crate::ndnet::DropoutKey>,
) -> Result<f64> {
    min_relu_margin(&t.critic_spec, params, &Matrix::hcat(s, a)?, draws_key)
}

/// Margin of the actor-loss critic passes from their kinks.
fn actor_margin(t: &TrainerState, batch: &Batch, draws: &ActorDraws) -> Result<f64> {
    let d = t.action_dim;
    match t.family() {
        Family::Td3 => {
            let a = forward_batch(&t.actor_spec, &t.actor, &batch.s, None)?;
            critic_margin(t, &t.critic1, &batch.s, &a, draws.keys[0])
        }
        Family::Sac | Family::Droq => {
            let out = forward_batch(&t.actor_spec, &t.actor, &batch.s, None)?;
            let mut margin = f64::INFINITY;
            for r in 0..out.rows() {
                for &raw in &out.row(r)[d..] {
                    margin = margin.min((raw - LOG_STD_MIN).abs()).min((raw - LOG_STD_MAX).abs());
                }
            }
            let (a, _) = t.squashed_actions(&t.actor, &batch.s, &draws.noise)?;
            let q1 = t.critic_q(&t.critic1, &batch.s, &a, draws.keys[0])?;
            let q2 = t.critic_q(&t.critic2, &batch.s, &a, draws.keys[1])?;
            for (x, y) in q1.iter().zip(&q2) {
                margin = margin.min((x - y).abs());
            }
            margin = margin.min(critic_margin(t, &t.critic1, &batch.s, &a, draws.keys[0])?);
            Ok(margin.min(critic_margin(t, &t.critic2, &batch.s, &a, draws.keys[1])?))
        }
    }
}

/// Max relative error of one loss for one seed; `None` when the probe point
/// sits too close to a kink for finite differences to be valid.
pub fn loss_error(kind: LossKind, family: Family, critic_activation: Activation, seed: u64) -> Result<Option<f64>> {
    let mut rng = stream(seed, Purpose::Check, kind as u64, family as u64);
    let t = probe_trainer(family, critic_activation, &mut rng)?;
    let batch = probe_batch(&t, 12, &mut rng)?;
    match kind {
        LossKind::Td3Critic | LossKind::SacCritic => {
            let draws: CriticDraws = t.draw_critic(batch.len(), &mut rng);
            let y = t.critic_targets(&batch, &draws)?;
            let key = draws.keys[2];
            if critic_margin(&t, &t.critic1, &batch.s, &batch.a, key)? < KINK_MARGIN {
                return Ok(None);
            }
            let (_, grad, _) = t.critic_loss_grad(&t.critic1, &batch, &y, key)?;
            let err = grad_check(&t.critic1, &grad, FD_STEP, |p| {
                t.critic_loss_grad(p, &batch, &y, key)
                    .expect("probe shapes are fixed")
                    .0
            });
            Ok(Some(err))
        }
        LossKind::Td3Actor | LossKind::SacActor => {
            let draws = t.draw_actor(batch.len(), &mut rng);
            if actor_margin(&t, &batch, &draws)? < KINK_MARGIN {
                return Ok(None);
            }
            let (_, grad) = t.actor_loss_grad(&t.actor, &batch, &draws)?;
            let err = grad_check(&t.actor, &grad, FD_STEP, |p| {
                t.actor_loss_grad(p, &batch, &draws).expect("probe shapes are fixed").0
            });
            Ok(Some(err))
        }
        LossKind::Alpha => {
            let noise = Matrix::from_vec(
                batch.len(),
                t.action_dim,
                (0..batch.len() * t.action_dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect(),
            )?;
            let (_, grad) = t.alpha_loss_grad(t.log_alpha, &batch, &noise)?;
            let err = grad_check(&[t.log_alpha], &[grad], FD_STEP, |p| {
                t.alpha_loss_grad(p[0], &batch, &noise)
                    .expect("probe shapes are fixed")
                    .0
            });
            Ok(Some(err))
        }
    }
}

/// Families whose losses a kind covers.
pub fn families_for(kind: LossKind) -> &'static [Family] {
    match kind {
        LossKind::Td3Critic | LossKind::Td3Actor => &[Family::Td3],
        LossKind::SacCritic | LossKind::SacActor | LossKind::Alpha => &[Family::Sac, Family::Droq],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub kind: LossKind,
    pub family: Family,
    pub activation: Activation,
    pub seeds_scored: usize,
    pub seeds_skipped: usize,
    pub max_error: f64,
}

/// Scores `seeds` accepted probes per (loss, family, critic activation),
/// skipping kink-adjacent probes. Gives up on a row after `4 * seeds` tries.
pub fn run_suite(seeds: usize) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for kind in LossKind::ALL {
        for &family in families_for(kind) {
            for activation in [Activation::Relu, Activation::Tanh] {
                let mut row = SuiteRow {
                    kind,
                    family,
                    activation,
                    seeds_scored: 0,
                    seeds_skipped: 0,
                    max_error: 0.0,
                };
                let mut seed = 0;
                while row.seeds_scored < seeds && seed < 4 * seeds as u64 {
                    match loss_error(kind, family, activation, seed)? {
                        Some(e) => {
                            row.seeds_scored += 1;
                            row.max_error = row.max_error.max(e);
                        }
                        None => row.seeds_skipped += 1,
                    }
                    seed += 1;
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
