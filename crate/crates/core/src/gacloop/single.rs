//! Single-policy deep RL baseline: one actor collecting its own data, with one
//! update loop after every environment step.

use super::output::create_with_header;
use super::RunConfig;
use crate::datahub::{ReplayBuffer, Transition};
use crate::envs::{self, rollout};
use crate::error::Result;
use crate::expcli::config::header_lines;
use crate::policy::EvalMode;
use crate::seeding::{stream, Purpose};
use crate::trainers::TrainerState;
use rand::Rng as _;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub env_steps: u64,
    pub eval_return: f64,
}

pub struct SinglePolicyResult {
    pub trainer: TrainerState,
    pub evals: Vec<EvalPoint>,
    /// Buffer size when the first update loop ran.
    pub buffer_at_first_update: Option<usize>,
    pub buffer_size: usize,
}

pub fn run_single_policy(config: &RunConfig, out: Option<&Path>) -> Result<SinglePolicyResult> {
    config.validate()?;
    let env = &config.env;
    let sp = &config.single;
    let mut trainer = TrainerState::new(
        config.trainer.clone(),
        env.state_dim(),
        env.action_dim(),
        &mut stream(config.seed, Purpose::TrainerInit, 0, 0),
    )?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut act_rng = stream(config.seed, Purpose::SinglePolicy, 0, 0);
    let mut train_rng = stream(config.seed, Purpose::Train, 0, 0);

    let mut log = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(create_with_header(
                &dir.join("single_policy.csv"),
                &header_lines(config),
                "env_steps,eval_return",
            )?)
        }
        None => None,
    };

    let mut evals = Vec::new();
    let mut first_update = None;
    let mut state = envs::reset(env);
    let mut t = 0;
    for step in 0..sp.total_steps {
        let action = if step < sp.warmup_steps {
            (0..env.action_dim())
                .map(|_| act_rng.random_range(-1.0..=1.0))
                .collect()
        } else {
            trainer.explore(&state, sp.exploration_noise, &mut act_rng)?
        };
        let o = envs::step(env, &state, &action, t)?;
        let done = t + 1 == env.episode_length;
        buffer.push([Transition::new(state, o.action, o.next_state.clone(), o.reward, done)])?;
        t += 1;
        state = if done {
            t = 0;
            envs::reset(env)
        } else {
            o.next_state
        };

        if buffer.len() >= sp.warmup_steps.max(1) {
            first_update.get_or_insert(buffer.len());
            trainer.train_loop(&buffer, 1, config.critic_steps, config.actor_steps, &mut train_rng)?;
        }

        if (step + 1) % sp.eval_every == 0 {
            let k = ((step + 1) / sp.eval_every) as u64;
            let mut total = 0.0;
            for e in 0..sp.eval_episodes.max(1) {
                let mut rng = stream(config.seed, Purpose::Eval, k, e as u64);
                total += rollout(env, &trainer.greedy_policy(), EvalMode::Deterministic, &mut rng)?.fitness;
            }
            let point = EvalPoint {
                env_steps: step as u64 + 1,
                eval_return: total / sp.eval_episodes.max(1) as f64,
            };
            if let Some(w) = log.as_mut() {
                writeln!(w, "{},{}", point.env_steps, point.eval_return)?;
                w.flush()?;
            }
            evals.push(point);
        }
    }
    Ok(SinglePolicyResult {
        trainer,
        evals,
        buffer_at_first_update: first_update,
        buffer_size: buffer.len(),
    })
}
