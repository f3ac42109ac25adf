//! Deterministic episodic environments.
//!
//! * `point_gait`: a point mass pushed forward by two "legs". Leg `i` is in
//!   contact when its action is strictly positive, and only legs in contact
//!   add thrust. The descriptor is the fraction of steps each leg spends in
//!   contact; the reward is forward velocity plus a survive bonus minus an
//!   energy cost.
//! * `point_nav`: a point mass driven by acceleration inside `[-1, 1]^2`. The
//!   descriptor is the final position; the reward is the energy cost alone.
//! * `bandit`: a single-state, single-step continuous bandit with reward
//!   `-(a - 0.5)^2`, used to sanity-check the single-policy trainers.
//!
//! Actions are clipped to `[-1, 1]` before use and episodes always run for
//! exactly `episode_length` steps.

use crate::datahub::Transition;
use crate::error::{check_finite, Error, Result};
use crate::policy::{Actor, EvalMode};
use crate::seeding::Rng;
use std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    PointGait,
    PointNav,
    Bandit,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointGait => "point_gait",
            EnvKind::PointNav => "point_nav",
            EnvKind::Bandit => "bandit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "point_gait" => Some(EnvKind::PointGait),
            "point_nav" => Some(EnvKind::PointNav),
            "bandit" => Some(EnvKind::Bandit),
            _ => None,
        }
    }
}

pub const BANDIT_OPTIMUM: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub episode_length: usize,
    pub dt: f64,
    pub drag: f64,
    pub torque_cost: f64,
}

impl EnvSpec {
    pub fn point_gait() -> Self {
        EnvSpec {
            kind: EnvKind::PointGait,
            episode_length: 100,
            dt: 0.05,
            drag: 0.1,
            torque_cost: 0.1,
        }
    }

    pub fn point_nav() -> Self {
        EnvSpec {
            kind: EnvKind::PointNav,
            ..EnvSpec::point_gait()
        }
    }

    pub fn bandit() -> Self {
        EnvSpec {
            kind: EnvKind::Bandit,
            episode_length: 1,
            ..EnvSpec::point_gait()
        }
    }

    pub fn of_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::PointGait => EnvSpec::point_gait(),
            EnvKind::PointNav => EnvSpec::point_nav(),
            EnvKind::Bandit => EnvSpec::bandit(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::PointGait | EnvKind::PointNav => 4,
            EnvKind::Bandit => 1,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.kind {
            EnvKind::PointGait | EnvKind::PointNav => 2,
            EnvKind::Bandit => 1,
        }
    }

    pub fn descriptor_dim(&self) -> usize {
        self.action_dim()
    }

    /// Per-axis `(lower, upper)` of the descriptor space.
    pub fn descriptor_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.descriptor_dim();
        match self.kind {
            EnvKind::PointGait => (vec![0.0; d], vec![1.0; d]),
            EnvKind::PointNav | EnvKind::Bandit => (vec![-1.0; d], vec![1.0; d]),
        }
    }

    /// A lower bound on any episode's fitness, used as the QD-score offset.
    pub fn fitness_floor(&self) -> f64 {
        let t = self.episode_length as f64;
        match self.kind {
            EnvKind::PointGait => 0.0,
            EnvKind::PointNav => -(self.torque_cost * self.action_dim() as f64 * t),
            EnvKind::Bandit => -(1.0 + BANDIT_OPTIMUM).powi(2) * t,
        }
    }

    /// Drag-limited terminal velocity of `point_gait`.
    pub fn max_velocity(&self) -> f64 {
        self.dt * self.action_dim() as f64 / self.drag
    }

    pub fn validate(&self) -> Result<()> {
        if self.episode_length == 0 {
            return Err(Error::config("episode_length", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        if !(self.drag > 0.0 && self.drag <= 1.0) {
            return Err(Error::config("drag", "must lie in (0, 1]"));
        }
        if !(self.torque_cost >= 0.0 && self.torque_cost.is_finite()) {
            return Err(Error::config("torque_cost", "must be non-negative"));
        }
        Ok(())
    }
}

pub fn reset(spec: &EnvSpec) -> Vec<f64> {
    match spec.kind {
        // [x, v, sin(phase), cos(phase)]
        EnvKind::PointGait => vec![0.0, 0.0, 0.0, 1.0],
        // [x, y, vx, vy]
        EnvKind::PointNav => vec![0.0; 4],
        EnvKind::Bandit => vec![1.0],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub contact: Vec<bool>,
    /// The clipped action the dynamics actually used.
    pub action: Vec<f64>,
}

pub fn step(spec: &EnvSpec, state: &[f64], action: &[f64], t: usize) -> Result<StepOutcome> {
    if state.len() != spec.state_dim() || action.len() != spec.action_dim() {
        return Err(Error::spec(format!(
            "{} step with state of {} and action of {} values",
            spec.kind.name(),
            state.len(),
            action.len()
        )));
    }
    if t >= spec.episode_length {
        return Err(Error::spec(format!(
            "step {t} past episode length {}",
            spec.episode_length
        )));
    }
    check_finite("action", action)?;
    let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let energy = spec.torque_cost * a.iter().map(|v| v * v).sum::<f64>();

    match spec.kind {
        EnvKind::PointGait => {
            let contact: Vec<bool> = a.iter().map(|&v| v > 0.0).collect();
            let thrust: f64 = a.iter().zip(&contact).filter(|(_, &c)| c).map(|(v, _)| v).sum();
            let v = (1.0 - spec.drag) * state[1] + spec.dt * thrust;
            let x = state[0] + spec.dt * v;
            let phase = TAU * (t + 1) as f64 / spec.episode_length as f64;
            Ok(StepOutcome {
                next_state: vec![x, v, phase.sin(), phase.cos()],
                reward: v + 1.0 - energy,
                contact,
                action: a,
            })
        }
        EnvKind::PointNav => {
            let vx = (1.0 - spec.drag) * state[2] + spec.dt * a[0];
            let vy = (1.0 - spec.drag) * state[3] + spec.dt * a[1];
            let x = (state[0] + spec.dt * vx).clamp(-1.0, 1.0);
            let y = (state[1] + spec.dt * vy).clamp(-1.0, 1.0);
            Ok(StepOutcome {
                next_state: vec![x, y, vx, vy],
                reward: -energy,
                contact: vec![false; 2],
                action: a,
            })
        }
        EnvKind::Bandit => Ok(StepOutcome {
            next_state: state.to_vec(),
            reward: -(a[0] - BANDIT_OPTIMUM).powi(2),
            contact: vec![false],
            action: a,
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub fitness: f64,
    pub descriptor: Vec<f64>,
}

pub fn descriptor_of(spec: &EnvSpec, transitions: &[Transition]) -> Result<Vec<f64>> {
    let last = transitions
        .last()
        .ok_or_else(|| Error::spec("descriptor of an empty trajectory"))?;
    Ok(match spec.kind {
        EnvKind::PointGait => {
            let n = transitions.len() as f64;
            (0..spec.action_dim())
                .map(|i| transitions.iter().filter(|t| t.a[i] > 0.0).count() as f64 / n)
                .collect()
        }
        EnvKind::PointNav => last.s_next[..2].to_vec(),
        EnvKind::Bandit => last.a.clone(),
    })
}

/// Runs one full episode.
pub fn rollout<A: Actor + ?Sized>(spec: &EnvSpec, actor: &A, mode: EvalMode, rng: &mut Rng) -> Result<Trajectory> {
    let t_len = spec.episode_length;
    let mut transitions = Vec::with_capacity(t_len);
    let mut state = reset(spec);
    let mut fitness = 0.0;
    for t in 0..t_len {
        let action = actor.act(&state, mode, rng)?;
        let out = step(spec, &state, &action, t)?;
        fitness += out.reward;
        let next = out.next_state;
        transitions.push(Transition::new(
            state,
            out.action,
            next.clone(),
            out.reward,
            t + 1 == t_len,
        ));
        state = next;
    }
    if spec.kind == EnvKind::PointGait {
        let bound = t_len as f64 * (spec.max_velocity() + 1.0);
        if fitness > bound {
            return Err(Error::spec(format!("point_gait fitness {fitness} above bound {bound}")));
        }
    }
    let descriptor = descriptor_of(spec, &transitions)?;
    Ok(Trajectory {
        transitions,
        fitness,
        descriptor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndnet::{Activation, NetSpec};
    use crate::policy::{NetPolicy, PolicyHead};
    use crate::seeding::{stream, Purpose};

    struct Constant(Vec<f64>);
    impl Actor for Constant {
        fn act(&self, _: &[f64], _: EvalMode, _: &mut Rng) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    /// Alternates between two actions, keyed on the phase carried in the state.
    struct Alternate(Vec<f64>, Vec<f64>);
    impl Actor for Alternate {
        fn act(&self, state: &[f64], _: EvalMode, _: &mut Rng) -> Result<Vec<f64>> {
            let t = (state[2].atan2(state[3]).rem_euclid(TAU) / TAU * 100.0).round() as usize;
            Ok(if t.is_multiple_of(2) {
                self.0.clone()
            } else {
                self.1.clone()
            })
        }
    }

    fn rng() -> Rng {
        stream(0, Purpose::Check, 0, 0)
    }

    #[test]
    fn resets_are_fixed() {
        assert_eq!(reset(&EnvSpec::point_gait()), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(reset(&EnvSpec::point_nav()), vec![0.0; 4]);
        let g = EnvSpec::point_gait();
        assert_eq!(reset(&g), reset(&g));
    }

    #[test]
    fn gait_null_action_earns_survive_bonus_only() {
        let g = EnvSpec::point_gait();
        let out = step(&g, &reset(&g), &[0.0, 0.0], 0).unwrap();
        assert_eq!(out.contact, vec![false, false]);
        assert_eq!(out.next_state[1], 0.0);
        assert_eq!(out.reward, 1.0);
    }

    #[test]
    fn gait_full_thrust_first_step() {
        let g = EnvSpec::point_gait();
        let out = step(&g, &reset(&g), &[1.0, 1.0], 0).unwrap();
        assert!((out.next_state[1] - 0.1).abs() < 1e-15);
        assert!((out.reward - 0.9).abs() < 1e-12);
    }

    #[test]
    fn nav_null_action_keeps_state() {
        let n = EnvSpec::point_nav();
        let out = step(&n, &reset(&n), &[0.0, 0.0], 0).unwrap();
        assert_eq!(out.next_state, reset(&n));
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn actions_are_clipped_and_checked() {
        let g = EnvSpec::point_gait();
        let a = step(&g, &reset(&g), &[5.0, -3.0], 0).unwrap();
        let b = step(&g, &reset(&g), &[1.0, -1.0], 0).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            step(&g, &reset(&g), &[f64::NAN, 0.0], 0),
            Err(Error::NumericFault { index: 0, .. })
        ));
        assert!(step(&g, &reset(&g), &[0.0], 0).is_err());
        assert!(step(&g, &reset(&g), &[0.0, 0.0], 100).is_err());
    }

    #[test]
    fn constant_contacts_give_corner_descriptors() {
        let g = EnvSpec::point_gait();
        let t = rollout(&g, &Constant(vec![1.0, -1.0]), EvalMode::Deterministic, &mut rng()).unwrap();
        assert_eq!(t.descriptor, vec![1.0, 0.0]);
        let t = rollout(&g, &Constant(vec![0.0, 0.0]), EvalMode::Deterministic, &mut rng()).unwrap();
        assert_eq!(t.descriptor, vec![0.0, 0.0]);
    }

    #[test]
    fn alternating_contacts_give_half() {
        let g = EnvSpec::point_gait();
        let actor = Alternate(vec![1.0, 1.0], vec![-1.0, -1.0]);
        let t = rollout(&g, &actor, EvalMode::Deterministic, &mut rng()).unwrap();
        // direct count over the constructed trajectory
        let on = t.transitions.iter().filter(|tr| tr.a[0] > 0.0).count();
        assert_eq!(on, 50);
        assert_eq!(t.descriptor, vec![0.5, 0.5]);
    }

    #[test]
    fn empty_trajectory_has_no_descriptor() {
        assert!(descriptor_of(&EnvSpec::point_gait(), &[]).is_err());
    }

    #[test]
    fn zero_weight_policy_collects_survive_reward() {
        let g = EnvSpec::point_gait();
        let spec = NetSpec::mlp(&[4, 8, 2], Activation::Tanh, Activation::Tanh).unwrap();
        let params = vec![0.0; spec.param_count()];
        let policy = NetPolicy {
            spec: &spec,
            params: &params,
            head: PolicyHead::Deterministic,
        };
        let t = rollout(&g, &policy, EvalMode::Deterministic, &mut rng()).unwrap();
        assert_eq!(t.transitions.len(), 100);
        assert_eq!(t.fitness, 100.0);
        assert_eq!(t.descriptor, vec![0.0, 0.0]);
        assert!(t.transitions[99].done && !t.transitions[98].done);
    }

    #[test]
    fn full_thrust_fitness_matches_scalar_recurrence() {
        let g = EnvSpec::point_gait();
        let t = rollout(&g, &Constant(vec![1.0, 1.0]), EvalMode::Deterministic, &mut rng()).unwrap();
        let mut v: f64 = 0.0;
        let mut expected = 0.0;
        for _ in 0..100 {
            v = 0.9 * v + 0.1;
            expected += v + 1.0 - 0.2;
        }
        assert!((t.fitness - expected).abs() < 1e-9, "{} vs {expected}", t.fitness);
        assert!(t.fitness <= 100.0 * (g.max_velocity() + 1.0));
    }

    #[test]
    fn fitness_is_exact_sum_of_rewards_and_rollouts_repeat() {
        let g = EnvSpec::point_gait();
        let spec = NetSpec::mlp(&[4, 8, 2], Activation::Tanh, Activation::Tanh).unwrap();
        let params = spec.init_params(&mut stream(3, Purpose::Check, 0, 0), 1.0);
        let policy = NetPolicy {
            spec: &spec,
            params: &params,
            head: PolicyHead::Deterministic,
        };
        let a = rollout(&g, &policy, EvalMode::Deterministic, &mut rng()).unwrap();
        let b = rollout(
            &g,
            &policy,
            EvalMode::Deterministic,
            &mut stream(9, Purpose::Check, 1, 1),
        )
        .unwrap();
        assert_eq!(a, b);
        let mut sum = 0.0;
        for tr in &a.transitions {
            sum += tr.r;
        }
        assert_eq!(sum, a.fitness);
    }

    #[test]
    fn nav_descriptor_stays_in_arena() {
        let n = EnvSpec::point_nav();
        let t = rollout(&n, &Constant(vec![1.0, -1.0]), EvalMode::Deterministic, &mut rng()).unwrap();
        assert_eq!(t.descriptor, vec![1.0, -1.0]);
        assert!(t.fitness >= n.fitness_floor());
    }

    #[test]
    fn stochastic_squashed_policy_uses_rng() {
        let g = EnvSpec::point_gait();
        let spec = NetSpec::mlp(&[4, 8, 4], Activation::Tanh, Activation::Identity).unwrap();
        let params = spec.init_params(&mut stream(3, Purpose::Check, 0, 0), 1.0);
        let policy = NetPolicy {
            spec: &spec,
            params: &params,
            head: PolicyHead::SquashedGaussian,
        };
        let a = rollout(&g, &policy, EvalMode::Stochastic, &mut stream(1, Purpose::Check, 0, 0)).unwrap();
        let b = rollout(&g, &policy, EvalMode::Stochastic, &mut stream(2, Purpose::Check, 0, 0)).unwrap();
        let c = rollout(&g, &policy, EvalMode::Stochastic, &mut stream(1, Purpose::Check, 0, 0)).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
