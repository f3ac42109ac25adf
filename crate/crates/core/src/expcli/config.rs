//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored. `env` and `family` are applied
//! first because they reset the defaults that depend on them; every other
//! key is then applied in file order. Unknown and repeated keys are errors.

use crate::envs::{EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::gacloop::{default_critic_steps, RunConfig};
use crate::ndnet::Activation;
use crate::policy::EvalMode;
use crate::trainers::{Family, TrainerConfig};
use std::collections::HashSet;
use std::path::Path;

pub const VERSION: &str = concat!("gacqd ", env!("CARGO_PKG_VERSION"));

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "env",
    "episode_length",
    "dt",
    "drag",
    "torque_cost",
    "family",
    "B",
    "J",
    "G",
    "G_critic",
    "G_actor",
    "iso_sigma",
    "line_sigma",
    "p_pg",
    "G_pg",
    "pg_lr",
    "grid_dims",
    "buffer_capacity",
    "transitions_batch_size",
    "seed",
    "n_init",
    "eval_mode",
    "gamma",
    "tau",
    "policy_noise",
    "noise_clip",
    "alpha_init",
    "target_entropy",
    "critic_lr",
    "greedy_lr",
    "alpha_lr",
    "policy_hidden",
    "critic_hidden",
    "policy_activation",
    "critic_activation",
    "critic_dropout",
    "critic_layer_norm",
    "total_steps",
    "warmup_steps",
    "eval_every",
    "eval_episodes",
    "exploration_noise",
    "record_wall_time",
    "heatmap",
];

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Current value of `key`, formatted so that `set` parses it back exactly.
pub fn get(c: &RunConfig, key: &str) -> Option<String> {
    let t = &c.trainer;
    Some(match key {
        "env" => c.env.kind.name().to_string(),
        "episode_length" => c.env.episode_length.to_string(),
        "dt" => c.env.dt.to_string(),
        "drag" => c.env.drag.to_string(),
        "torque_cost" => c.env.torque_cost.to_string(),
        "family" => t.family.name().to_string(),
        "B" => c.batch.to_string(),
        "J" => c.generations.to_string(),
        "G" => c.loops.to_string(),
        "G_critic" => c.critic_steps.to_string(),
        "G_actor" => c.actor_steps.to_string(),
        "iso_sigma" => c.variation.iso_sigma.to_string(),
        "line_sigma" => c.variation.line_sigma.to_string(),
        "p_pg" => c.variation.p_pg.to_string(),
        "G_pg" => c.variation.g_pg.to_string(),
        "pg_lr" => c.variation.pg_lr.to_string(),
        "grid_dims" => list(&c.grid_dims),
        "buffer_capacity" => c.buffer_capacity.to_string(),
        "transitions_batch_size" => t.batch_size.to_string(),
        "seed" => c.seed.to_string(),
        "n_init" => c.n_init.map_or("auto".to_string(), |n| n.to_string()),
        "eval_mode" => c.eval_mode.name().to_string(),
        "gamma" => t.gamma.to_string(),
        "tau" => t.tau.to_string(),
        "policy_noise" => t.policy_noise.to_string(),
        "noise_clip" => t.noise_clip.to_string(),
        "alpha_init" => t.alpha_init.to_string(),
        "target_entropy" => t.target_entropy.map_or("auto".to_string(), |h| h.to_string()),
        "critic_lr" => t.critic_lr.to_string(),
        "greedy_lr" => t.greedy_lr.to_string(),
        "alpha_lr" => t.alpha_lr.to_string(),
        "policy_hidden" => list(&t.policy_hidden),
        "critic_hidden" => list(&t.critic_hidden),
        "policy_activation" => t.policy_activation.name().to_string(),
        "critic_activation" => t.critic_activation.name().to_string(),
        "critic_dropout" => t.critic_dropout.to_string(),
        "critic_layer_norm" => t.critic_layer_norm.to_string(),
        "total_steps" => c.single.total_steps.to_string(),
        "warmup_steps" => c.single.warmup_steps.to_string(),
        "eval_every" => c.single.eval_every.to_string(),
        "eval_episodes" => c.single.eval_episodes.to_string(),
        "exploration_noise" => c.single.exploration_noise.to_string(),
        "record_wall_time" => c.record_wall_time.to_string(),
        "heatmap" => c.heatmap.to_string(),
        _ => return None,
    })
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::config(key, format!("`{value}` is not {expected}"))
}

fn uint(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, v, "a non-negative integer"))
}

fn real(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| bad(key, v, "a finite number"))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    v.parse().map_err(|_| bad(key, v, "true or false"))
}

fn sizes(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| uint(key, x.trim())).collect()
}

fn activation(key: &str, v: &str) -> Result<Activation> {
    Activation::parse(v).ok_or_else(|| bad(key, v, "one of relu, tanh, identity"))
}

/// Resets everything that depends on the family.
pub fn apply_family(c: &mut RunConfig, family: Family) {
    let old = TrainerConfig::for_family(c.trainer.family);
    let fresh = TrainerConfig::for_family(family);
    c.trainer.family = family;
    c.trainer.critic_dropout = fresh.critic_dropout;
    c.trainer.critic_layer_norm = fresh.critic_layer_norm;
    if c.critic_steps == default_critic_steps(old.family) {
        c.critic_steps = default_critic_steps(family);
    }
}

pub fn apply_env(c: &mut RunConfig, kind: EnvKind) {
    c.env = EnvSpec::of_kind(kind);
    if c.grid_dims.len() != c.env.descriptor_dim() {
        c.grid_dims = vec![50; c.env.descriptor_dim()];
    }
}

pub fn set(c: &mut RunConfig, key: &str, v: &str) -> Result<()> {
    let v = v.trim();
    match key {
        "env" => apply_env(
            c,
            EnvKind::parse(v).ok_or_else(|| bad(key, v, "point_gait, point_nav or bandit"))?,
        ),
        "episode_length" => c.env.episode_length = uint(key, v)?,
        "dt" => c.env.dt = real(key, v)?,
        "drag" => c.env.drag = real(key, v)?,
        "torque_cost" => c.env.torque_cost = real(key, v)?,
        "family" => apply_family(c, Family::parse(v).ok_or_else(|| bad(key, v, "td3, sac or droq"))?),
        "B" => c.batch = uint(key, v)?,
        "J" => c.generations = uint(key, v)?,
        "G" => c.loops = uint(key, v)?,
        "G_critic" => c.critic_steps = uint(key, v)?,
        "G_actor" => c.actor_steps = uint(key, v)?,
        "iso_sigma" => c.variation.iso_sigma = real(key, v)?,
        "line_sigma" => c.variation.line_sigma = real(key, v)?,
        "p_pg" => c.variation.p_pg = real(key, v)?,
        "G_pg" => c.variation.g_pg = uint(key, v)?,
        "pg_lr" => c.variation.pg_lr = real(key, v)?,
        "grid_dims" => c.grid_dims = sizes(key, v)?,
        "buffer_capacity" => c.buffer_capacity = uint(key, v)?,
        "transitions_batch_size" => c.trainer.batch_size = uint(key, v)?,
        "seed" => c.seed = v.parse().map_err(|_| bad(key, v, "a non-negative integer"))?,
        "n_init" => c.n_init = if v == "auto" { None } else { Some(uint(key, v)?) },
        "eval_mode" => c.eval_mode = EvalMode::parse(v).ok_or_else(|| bad(key, v, "deterministic or stochastic"))?,
        "gamma" => c.trainer.gamma = real(key, v)?,
        "tau" => c.trainer.tau = real(key, v)?,
        "policy_noise" => c.trainer.policy_noise = real(key, v)?,
        "noise_clip" => c.trainer.noise_clip = real(key, v)?,
        "alpha_init" => c.trainer.alpha_init = real(key, v)?,
        "target_entropy" => c.trainer.target_entropy = if v == "auto" { None } else { Some(real(key, v)?) },
        "critic_lr" => c.trainer.critic_lr = real(key, v)?,
        "greedy_lr" => c.trainer.greedy_lr = real(key, v)?,
        "alpha_lr" => c.trainer.alpha_lr = real(key, v)?,
        "policy_hidden" => c.trainer.policy_hidden = sizes(key, v)?,
        "critic_hidden" => c.trainer.critic_hidden = sizes(key, v)?,
        "policy_activation" => c.trainer.policy_activation = activation(key, v)?,
        "critic_activation" => c.trainer.critic_activation = activation(key, v)?,
        "critic_dropout" => c.trainer.critic_dropout = real(key, v)?,
        "critic_layer_norm" => c.trainer.critic_layer_norm = boolean(key, v)?,
        "total_steps" => c.single.total_steps = uint(key, v)?,
        "warmup_steps" => c.single.warmup_steps = uint(key, v)?,
        "eval_every" => c.single.eval_every = uint(key, v)?,
        "eval_episodes" => c.single.eval_episodes = uint(key, v)?,
        "exploration_noise" => c.single.exploration_noise = real(key, v)?,
        "record_wall_time" => c.record_wall_time = boolean(key, v)?,
        "heatmap" => c.heatmap = boolean(key, v)?,
        _ => return Err(Error::config(key, "unknown key")),
    }
    Ok(())
}

/// Applies `pairs` on top of `base`, `env` and `family` first.
pub fn apply_pairs(base: RunConfig, pairs: &[(String, String)]) -> Result<RunConfig> {
    let mut c = base;
    let mut seen = HashSet::new();
    for (k, _) in pairs {
        if !seen.insert(k.as_str()) {
            return Err(Error::config(k.clone(), "given more than once"));
        }
    }
    for first in ["env", "family"] {
        if let Some((k, v)) = pairs.iter().find(|(k, _)| k == first) {
            set(&mut c, k, v)?;
        }
    }
    for (k, v) in pairs.iter().filter(|(k, _)| k != "env" && k != "family") {
        set(&mut c, k, v)?;
    }
    c.validate()?;
    Ok(c)
}

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(line, "expected key=value"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    apply_pairs(RunConfig::default(), &parse_pairs(text)?)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// `version=...` followed by every key in echo order.
pub fn header_lines(c: &RunConfig) -> Vec<String> {
    let mut out = vec![format!("version={VERSION}")];
    out.extend(
        KEYS.iter()
            .map(|k| format!("{k}={}", get(c, k).expect("every listed key has a value"))),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config_str("").unwrap(), RunConfig::default());
        assert_eq!(parse_config_str("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let c = parse_config_str("family=sac\nG=2500").unwrap();
        assert_eq!(c.family(), Family::Sac);
        assert_eq!(c.loops, 2500);
        assert_eq!(c.critic_steps, 1);
        let c = parse_config_str("G_critic=7\nfamily=droq").unwrap();
        assert_eq!((c.critic_steps, c.trainer.critic_dropout), (7, 0.01));
        assert!(c.trainer.critic_layer_norm);
    }

    #[test]
    fn rejections_name_the_key() {
        for (text, key) in [
            ("G=-1", "G"),
            ("bogus=1", "bogus"),
            ("gamma=1.5", "gamma"),
            ("B=0", "B"),
            ("family=ppo", "family"),
            ("seed=1\nseed=2", "seed"),
            ("grid_dims=10", "grid_dims"),
            ("p_pg=2", "p_pg"),
            ("dt=nan", "dt"),
        ] {
            match parse_config_str(text) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn echo_round_trips() {
        let text = "env=point_nav\nfamily=droq\nB=7\ntarget_entropy=-0.5\npolicy_hidden=3,4\nn_init=5\ndt=0.1";
        let c = parse_config_str(text).unwrap();
        let echoed: String = header_lines(&c)[1..].join("\n");
        assert_eq!(parse_config_str(&echoed).unwrap(), c);
        assert!(header_lines(&c)[0].starts_with("version=gacqd "));
        assert_eq!(header_lines(&c).len(), KEYS.len() + 1);
    }

    #[test]
    fn bandit_gets_a_one_axis_grid() {
        let c = parse_config_str("env=bandit").unwrap();
        assert_eq!(c.grid_dims, vec![50]);
        assert_eq!(c.env.episode_length, 1);
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let e = parse_config(Path::new("/nonexistent/gacqd.cfg")).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }
}
