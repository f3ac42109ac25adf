//! Twin-critic actor-critic trainers: TD3, SAC and DroQ behind one state type.
//!
//! Every update is split into a draw step, which pulls all randomness for the
//! update from the caller's stream, and a deterministic core that consumes
//! those draws. The cores are public so gradient checks can freeze noise and
//! dropout masks.
//!
//! DroQ is SAC with dropout and layer norm on the critic hidden layers. Its
//! critics see dropout in every training-time pass (online, target and the
//! pass that feeds the actor). Dropout keys are only drawn when the critic
//! actually has dropout, so DroQ with the regularization switched off
//! consumes the same random stream as SAC.

pub mod gradcheck;

use crate::datahub::{ReplayBuffer, Transition};
use crate::error::{check_finite, Error, Result};
use crate::ndnet::{
    adam_step, backward_tape, forward_batch, forward_tape, soft_update, Activation, AdamState, DropoutKey, Matrix,
    NetSpec, ParamVector,
};
use crate::policy::{squashed_objective_grad, squashed_sample, Actor, EvalMode, NetPolicy, PolicyHead};
use crate::seeding::Rng;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Td3,
    Sac,
    Droq,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Td3 => "td3",
            Family::Sac => "sac",
            Family::Droq => "droq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "td3" => Some(Family::Td3),
            "sac" => Some(Family::Sac),
            "droq" => Some(Family::Droq),
            _ => None,
        }
    }

    pub fn head(self) -> PolicyHead {
        match self {
            Family::Td3 => PolicyHead::Deterministic,
            Family::Sac | Family::Droq => PolicyHead::SquashedGaussian,
        }
    }

    pub fn is_max_entropy(self) -> bool {
        self != Family::Td3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub family: Family,
    pub gamma: f64,
    pub tau: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub alpha_init: f64,
    /// `None` means `-action_dim`.
    pub target_entropy: Option<f64>,
    pub critic_lr: f64,
    pub greedy_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub policy_activation: Activation,
    pub critic_activation: Activation,
    pub critic_dropout: f64,
    pub critic_layer_norm: bool,
}

impl TrainerConfig {
    pub fn for_family(family: Family) -> Self {
        let droq = family == Family::Droq;
        TrainerConfig {
            family,
            gamma: 0.99,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            alpha_init: 1.0,
            target_entropy: None,
            critic_lr: 3e-4,
            greedy_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 64,
            policy_hidden: vec![16, 16],
            critic_hidden: vec![32, 32],
            policy_activation: Activation::Tanh,
            critic_activation: Activation::Relu,
            critic_dropout: if droq { 0.01 } else { 0.0 },
            critic_layer_norm: droq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |key: &str, v: f64, hi_open: bool| {
            let ok = v >= 0.0 && if hi_open { v < 1.0 } else { v <= 1.0 };
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} outside its allowed range")))
            }
        };
        unit("gamma", self.gamma, true)?;
        unit("tau", self.tau, false)?;
        unit("critic_dropout", self.critic_dropout, true)?;
        for (key, v) in [
            ("policy_noise", self.policy_noise),
            ("noise_clip", self.noise_clip),
            ("critic_lr", self.critic_lr),
            ("greedy_lr", self.greedy_lr),
            ("alpha_lr", self.alpha_lr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("{v} must be a non-negative number")));
            }
        }
        if !(self.alpha_init > 0.0 && self.alpha_init.is_finite()) {
            return Err(Error::config("alpha_init", "must be positive"));
        }
        if self.target_entropy.is_some_and(|h| !h.is_finite()) {
            return Err(Error::config("target_entropy", "must be finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.policy_hidden.contains(&0) {
            return Err(Error::config("policy_hidden", "layer sizes must be positive"));
        }
        if self.critic_hidden.contains(&0) {
            return Err(Error::config("critic_hidden", "layer sizes must be positive"));
        }
        Ok(())
    }
}

/// A sampled minibatch laid out as matrices.
#[derive(Clone, Debug)]
pub struct Batch {
    pub s: Matrix,
    pub a: Matrix,
    pub r: Vec<f64>,
    pub s_next: Matrix,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let rows = |f: fn(&Transition) -> &Vec<f64>| {
            let v: Vec<&[f64]> = ts.iter().map(|t| f(t).as_slice()).collect();
            Matrix::from_rows(&v)
        };
        Ok(Batch {
            s: rows(|t| &t.s)?,
            a: rows(|t| &t.a)?,
            r: ts.iter().map(|t| t.r).collect(),
            s_next: rows(|t| &t.s_next)?,
            done: ts.iter().map(|t| t.done).collect(),
        })
    }

    pub fn sample(buffer: &ReplayBuffer, n: usize, rng: &mut Rng) -> Result<Self> {
        Batch::from_transitions(&buffer.sample(n, rng)?)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Randomness consumed by one critic update.
#[derive(Clone, Debug)]
pub struct CriticDraws {
    /// Standard normals, one row per transition: target smoothing noise for
    /// TD3, next-action reparameterization noise for SAC.
    pub noise: Matrix,
    /// Target critic 1, target critic 2, online critic 1, online critic 2.
    pub keys: [Option<DropoutKey>; 4],
}

/// Randomness consumed by one actor update.
#[derive(Clone, Debug)]
pub struct ActorDraws {
    /// Reparameterization noise; empty for TD3.
    pub noise: Matrix,
    pub keys: [Option<DropoutKey>; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticLossReport {
    /// Sum of both critics' mean squared errors.
    pub loss: f64,
    pub mean_q: f64,
    pub mean_target: f64,
}

/// Summary of one pass through the update loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingRow {
    pub update_index: u64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha: Option<f64>,
    pub mean_q: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub config: TrainerConfig,
    pub state_dim: usize,
    pub action_dim: usize,
    pub actor_spec: NetSpec,
    pub critic_spec: NetSpec,
    pub actor: ParamVector,
    pub target_actor: Option<ParamVector>,
    pub critic1: ParamVector,
    pub critic2: ParamVector,
    pub target_critic1: ParamVector,
    pub target_critic2: ParamVector,
    pub actor_adam: AdamState,
    pub critic1_adam: AdamState,
    pub critic2_adam: AdamState,
    pub log_alpha: f64,
    pub alpha_adam: AdamState,
    pub loops_done: u64,
}

fn standard_normals(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape is consistent by construction")
}

fn single_column(m: &Matrix) -> Vec<f64> {
    m.as_slice().to_vec()
}

impl TrainerState {
    /// The policy architecture for a family, shared by the greedy actor and
    /// every archive genotype.
    pub fn policy_spec(config: &TrainerConfig, state_dim: usize, action_dim: usize) -> Result<NetSpec> {
        let head = config.family.head();
        let mut sizes = vec![state_dim];
        sizes.extend(&config.policy_hidden);
        sizes.push(head.output_dim(action_dim));
        let out = match head {
            PolicyHead::Deterministic => Activation::Tanh,
            PolicyHead::SquashedGaussian => Activation::Identity,
        };
        NetSpec::mlp(&sizes, config.policy_activation, out)
    }

    pub fn critic_spec(config: &TrainerConfig, state_dim: usize, action_dim: usize) -> Result<NetSpec> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend(&config.critic_hidden);
        sizes.push(1);
        NetSpec::mlp(&sizes, config.critic_activation, Activation::Identity)?
            .with_hidden_regularization(config.critic_dropout, config.critic_layer_norm)
    }

    pub fn new(config: TrainerConfig, state_dim: usize, action_dim: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let actor_spec = TrainerState::policy_spec(&config, state_dim, action_dim)?;
        let critic_spec = TrainerState::critic_spec(&config, state_dim, action_dim)?;
        let actor = actor_spec.init_params(rng, 0.01);
        let critic1 = critic_spec.init_params(rng, 1.0);
        let critic2 = critic_spec.init_params(rng, 1.0);
        let target_actor = (config.family == Family::Td3).then(|| actor.clone());
        let log_alpha = config.alpha_init.ln();
        Ok(TrainerState {
            state_dim,
            action_dim,
            actor_adam: AdamState::new(actor.len()),
            critic1_adam: AdamState::new(critic1.len()),
            critic2_adam: AdamState::new(critic2.len()),
            target_critic1: critic1.clone(),
            target_critic2: critic2.clone(),
            actor,
            target_actor,
            critic1,
            critic2,
            actor_spec,
            critic_spec,
            log_alpha,
            alpha_adam: AdamState::new(1),
            loops_done: 0,
            config,
        })
    }

    pub fn family(&self) -> Family {
        self.config.family
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy.unwrap_or(-(self.action_dim as f64))
    }

    pub fn greedy_policy(&self) -> NetPolicy<'_> {
        self.policy(&self.actor)
    }

    pub fn policy<'a>(&'a self, params: &'a [f64]) -> NetPolicy<'a> {
        NetPolicy {
            spec: &self.actor_spec,
            params,
            head: self.family().head(),
        }
    }

    /// Exploration action for single-policy training: Gaussian-perturbed for
    /// TD3, a policy sample otherwise.
    pub fn explore(&self, state: &[f64], exploration_noise: f64, rng: &mut Rng) -> Result<Vec<f64>> {
        let policy = self.greedy_policy();
        match self.family() {
            Family::Td3 => {
                let a = policy.act(state, EvalMode::Deterministic, rng)?;
                Ok(a.into_iter()
                    .map(|v| {
                        let n: f64 = StandardNormal.sample(rng);
                        (v + exploration_noise * n).clamp(-1.0, 1.0)
                    })
                    .collect())
            }
            Family::Sac | Family::Droq => policy.act(state, EvalMode::Stochastic, rng),
        }
    }

    fn key(&self, rng: &mut Rng) -> Option<DropoutKey> {
        self.critic_spec.has_dropout().then(|| DropoutKey(rng.random()))
    }

    pub fn draw_critic(&self, n: usize, rng: &mut Rng) -> CriticDraws {
        let noise = standard_normals(n, self.action_dim, rng);
        let keys = [self.key(rng), self.key(rng), self.key(rng), self.key(rng)];
        CriticDraws { noise, keys }
    }

    pub fn draw_actor(&self, n: usize, rng: &mut Rng) -> ActorDraws {
        let noise = if self.family().is_max_entropy() {
            standard_normals(n, self.action_dim, rng)
        } else {
            Matrix::zeros(n, 0)
        };
        let keys = [self.key(rng), self.key(rng)];
        ActorDraws { noise, keys }
    }

    fn critic_q(&self, params: &[f64], s: &Matrix, a: &Matrix, key: Option<DropoutKey>) -> Result<Vec<f64>> {
        let x = Matrix::hcat(s, a)?;
        Ok(single_column(&forward_batch(&self.critic_spec, params, &x, key)?))
    }

    /// Samples squashed actions and their log-densities for a batch of states.
    fn squashed_actions(&self, actor: &[f64], s: &Matrix, noise: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        let out = forward_batch(&self.actor_spec, actor, s, None)?;
        let d = self.action_dim;
        let mut actions = Matrix::zeros(s.rows(), d);
        let mut logp = Vec::with_capacity(s.rows());
        for r in 0..s.rows() {
            let row = out.row(r);
            let sample = squashed_sample(&row[..d], &row[d..], noise.row(r));
            actions.row_mut(r).copy_from_slice(&sample.action);
            logp.push(sample.log_prob);
        }
        Ok((actions, logp))
    }

    /// Bellman targets for a batch, given frozen draws.
    pub fn critic_targets(&self, batch: &Batch, draws: &CriticDraws) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let (next_a, entropy_term) = match self.family() {
            Family::Td3 => {
                let target_actor = self
                    .target_actor
                    .as_ref()
                    .ok_or_else(|| Error::spec("td3 trainer without a target actor"))?;
                let mut a = forward_batch(&self.actor_spec, target_actor, &batch.s_next, None)?;
                for (v, n) in a.as_mut_slice().iter_mut().zip(draws.noise.as_slice()) {
                    let eps = (cfg.policy_noise * n).clamp(-cfg.noise_clip, cfg.noise_clip);
                    *v = (*v + eps).clamp(-1.0, 1.0);
                }
                (a, vec![0.0; batch.len()])
            }
            Family::Sac | Family::Droq => {
                let (a, logp) = self.squashed_actions(&self.actor, &batch.s_next, &draws.noise)?;
                let alpha = self.alpha();
                (a, logp.into_iter().map(|l| alpha * l).collect())
            }
        };
        let q1 = self.critic_q(&self.target_critic1, &batch.s_next, &next_a, draws.keys[0])?;
        let q2 = self.critic_q(&self.target_critic2, &batch.s_next, &next_a, draws.keys[1])?;
        let y: Vec<f64> = (0..batch.len())
            .map(|i| {
                let cont = if batch.done[i] { 0.0 } else { 1.0 };
                batch.r[i] + cfg.gamma * cont * (q1[i].min(q2[i]) - entropy_term[i])
            })
            .collect();
        check_finite("critic target", &y)?;
        Ok(y)
    }

    /// Mean squared error of one critic against fixed targets, and its
    /// parameter gradient.
    pub fn critic_loss_grad(
        &self,
        params: &[f64],
        batch: &Batch,
        targets: &[f64],
        key: Option<DropoutKey>,
    ) -> Result<(f64, Vec<f64>, f64)> {
        let x = Matrix::hcat(&batch.s, &batch.a)?;
        let tape = forward_tape(&self.critic_spec, params, &x, key)?;
        let q = tape.output().as_slice();
        let n = batch.len() as f64;
        let mut upstream = Matrix::zeros(batch.len(), 1);
        let mut loss = 0.0;
        for i in 0..batch.len() {
            let err = q[i] - targets[i];
            loss += err * err;
            upstream.set(i, 0, 2.0 * err);
        }
        let mean_q = q.iter().sum::<f64>() / n;
        let grads = backward_tape(&self.critic_spec, params, &tape, &upstream, true)?;
        Ok((loss / n, grads.params, mean_q))
    }

    /// One step on both critics followed by the target soft updates.
    pub fn update_critic_with(&mut self, batch: &Batch, draws: &CriticDraws) -> Result<CriticLossReport> {
        let y = self.critic_targets(batch, draws)?;
        let (l1, g1, mean_q) = self.critic_loss_grad(&self.critic1, batch, &y, draws.keys[2])?;
        let (l2, g2, _) = self.critic_loss_grad(&self.critic2, batch, &y, draws.keys[3])?;
        let loss = l1 + l2;
        check_finite("critic loss", &[loss])?;
        let lr = self.config.critic_lr;
        adam_step(&mut self.critic1, &g1, &mut self.critic1_adam, lr)?;
        adam_step(&mut self.critic2, &g2, &mut self.critic2_adam, lr)?;
        let tau = self.config.tau;
        soft_update(&mut self.target_critic1, &self.critic1, tau)?;
        soft_update(&mut self.target_critic2, &self.critic2, tau)?;
        if let Some(t) = self.target_actor.as_mut() {
            soft_update(t, &self.actor, tau)?;
        }
        Ok(CriticLossReport {
            loss,
            mean_q,
            mean_target: y.iter().sum::<f64>() / y.len() as f64,
        })
    }

    pub fn update_critic(&mut self, batch: &Batch, rng: &mut Rng) -> Result<CriticLossReport> {
        let draws = self.draw_critic(batch.len(), rng);
        self.update_critic_with(batch, &draws)
    }

    /// Actor loss and gradient for arbitrary actor parameters against the
    /// current critics. TD3: `-mean Q1(s, pi(s))`. SAC family:
    /// `mean(alpha * logp - min(Q1, Q2))` with reparameterized actions.
    pub fn actor_loss_grad(&self, actor: &[f64], batch: &Batch, draws: &ActorDraws) -> Result<(f64, Vec<f64>)> {
        let n = batch.len();
        let d = self.action_dim;
        let sd = self.state_dim;
        let atape = forward_tape(&self.actor_spec, actor, &batch.s, None)?;
        let ones = Matrix::from_vec(n, 1, vec![1.0; n])?;
        match self.family() {
            Family::Td3 => {
                let x = Matrix::hcat(&batch.s, atape.output())?;
                let qtape = forward_tape(&self.critic_spec, &self.critic1, &x, draws.keys[0])?;
                let loss = -qtape.output().as_slice().iter().sum::<f64>() / n as f64;
                let dq = backward_tape(&self.critic_spec, &self.critic1, &qtape, &ones, false)?;
                let mut upstream = dq.inputs.columns(sd, d);
                upstream.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
                let g = backward_tape(&self.actor_spec, actor, &atape, &upstream, true)?;
                Ok((loss, g.params))
            }
            Family::Sac | Family::Droq => {
                let out = atape.output();
                let alpha = self.alpha();
                let samples: Vec<_> = (0..n)
                    .map(|r| squashed_sample(&out.row(r)[..d], &out.row(r)[d..], draws.noise.row(r)))
                    .collect();
                let mut actions = Matrix::zeros(n, d);
                for (r, s) in samples.iter().enumerate() {
                    actions.row_mut(r).copy_from_slice(&s.action);
                }
                let x = Matrix::hcat(&batch.s, &actions)?;
                let t1 = forward_tape(&self.critic_spec, &self.critic1, &x, draws.keys[0])?;
                let t2 = forward_tape(&self.critic_spec, &self.critic2, &x, draws.keys[1])?;
                let dq1 = backward_tape(&self.critic_spec, &self.critic1, &t1, &ones, false)?.inputs;
                let dq2 = backward_tape(&self.critic_spec, &self.critic2, &t2, &ones, false)?.inputs;
                let (q1, q2) = (t1.output().as_slice(), t2.output().as_slice());
                let mut upstream = Matrix::zeros(n, 2 * d);
                let mut loss = 0.0;
                for r in 0..n {
                    let (q, dq) = if q1[r] <= q2[r] { (q1[r], &dq1) } else { (q2[r], &dq2) };
                    loss += alpha * samples[r].log_prob - q;
                    let g = squashed_objective_grad(&samples[r], draws.noise.row(r), alpha, &dq.row(r)[sd..]);
                    upstream.row_mut(r).copy_from_slice(&g);
                }
                let g = backward_tape(&self.actor_spec, actor, &atape, &upstream, true)?;
                Ok((loss / n as f64, g.params))
            }
        }
    }

    /// One Adam step on external actor parameters; the trainer is untouched.
    pub fn actor_step(
        &self,
        actor: &mut [f64],
        adam: &mut AdamState,
        lr: f64,
        batch: &Batch,
        draws: &ActorDraws,
    ) -> Result<f64> {
        let (loss, grad) = self.actor_loss_grad(actor, batch, draws)?;
        check_finite("actor loss", &[loss])?;
        adam_step(actor, &grad, adam, lr)?;
        Ok(loss)
    }

    pub fn update_actor_with(&mut self, batch: &Batch, draws: &ActorDraws) -> Result<f64> {
        let mut actor = std::mem::take(&mut self.actor);
        let mut adam = std::mem::replace(&mut self.actor_adam, AdamState::new(0));
        let res = self.actor_step(&mut actor, &mut adam, self.config.greedy_lr, batch, draws);
        self.actor = actor;
        self.actor_adam = adam;
        res
    }

    pub fn update_actor(&mut self, batch: &Batch, rng: &mut Rng) -> Result<f64> {
        let draws = self.draw_actor(batch.len(), rng);
        self.update_actor_with(batch, &draws)
    }

    /// Temperature loss `-mean(log_alpha * (logp + target_entropy))` and its
    /// derivative in `log_alpha`, with log-densities from the current actor.
    pub fn alpha_loss_grad(&self, log_alpha: f64, batch: &Batch, noise: &Matrix) -> Result<(f64, f64)> {
        let (_, logp) = self.squashed_actions(&self.actor, &batch.s, noise)?;
        let h = self.target_entropy();
        let n = logp.len() as f64;
        let mean_gap = logp.iter().map(|l| l + h).sum::<f64>() / n;
        Ok((-log_alpha * mean_gap, -mean_gap))
    }

    pub fn update_alpha_with(&mut self, batch: &Batch, noise: &Matrix) -> Result<f64> {
        if !self.family().is_max_entropy() {
            return Err(Error::spec("temperature update on a td3 trainer"));
        }
        let (_, grad) = self.alpha_loss_grad(self.log_alpha, batch, noise)?;
        let mut p = [self.log_alpha];
        adam_step(&mut p, &[grad], &mut self.alpha_adam, self.config.alpha_lr)?;
        self.log_alpha = p[0];
        Ok(self.alpha())
    }

    pub fn update_alpha(&mut self, batch: &Batch, rng: &mut Rng) -> Result<f64> {
        let noise = standard_normals(batch.len(), self.action_dim, rng);
        self.update_alpha_with(batch, &noise)
    }

    /// `loops` passes of `critic_steps` critic updates then `actor_steps`
    /// actor updates (each followed by a temperature update for the SAC
    /// family). Every update samples a fresh batch.
    pub fn train_loop(
        &mut self,
        buffer: &ReplayBuffer,
        loops: usize,
        critic_steps: usize,
        actor_steps: usize,
        rng: &mut Rng,
    ) -> Result<Vec<TrainingRow>> {
        if loops == 0 || (critic_steps == 0 && actor_steps == 0) {
            return Ok(Vec::new());
        }
        if buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.config.batch_size;
        let mut rows = Vec::with_capacity(loops);
        for _ in 0..loops {
            let (mut closs, mut mq) = (0.0, 0.0);
            for _ in 0..critic_steps {
                let batch = Batch::sample(buffer, n, rng)?;
                let rep = self.update_critic(&batch, rng)?;
                closs += rep.loss;
                mq += rep.mean_q;
            }
            let mut aloss = 0.0;
            for _ in 0..actor_steps {
                let batch = Batch::sample(buffer, n, rng)?;
                aloss += self.update_actor(&batch, rng)?;
                if self.family().is_max_entropy() {
                    self.update_alpha(&batch, rng)?;
                }
            }
            let avg = |sum: f64, k: usize| (k > 0).then(|| sum / k as f64);
            rows.push(TrainingRow {
                update_index: self.loops_done,
                critic_loss: avg(closs, critic_steps),
                actor_loss: avg(aloss, actor_steps),
                alpha: self.family().is_max_entropy().then(|| self.alpha()),
                mean_q: avg(mq, critic_steps),
            });
            self.loops_done += 1;
        }
        Ok(rows)
    }

    /// Every mutable number of the trainer, for bit-exact comparisons.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put = |v: &[f64]| {
            out.extend((v.len() as u64).to_le_bytes());
            for x in v {
                out.extend(x.to_le_bytes());
            }
        };
        put(&self.actor);
        put(self.target_actor.as_deref().unwrap_or(&[]));
        put(&self.critic1);
        put(&self.critic2);
        put(&self.target_critic1);
        put(&self.target_critic2);
        for a in [
            &self.actor_adam,
            &self.critic1_adam,
            &self.critic2_adam,
            &self.alpha_adam,
        ] {
            put(&a.m);
            put(&a.v);
            put(&[a.t as f64]);
        }
        put(&[self.log_alpha, self.loops_done as f64]);
        out
    }
}

#[cfg(test)]
pub(crate) mod tests;
