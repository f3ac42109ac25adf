//! Quick self-test behind the `check` verb.

use crate::container::{Archive, GridSpec, Source};
use crate::datahub::{ReplayBuffer, Transition};
use crate::error::Result;
use crate::gacloop::{run_gac, GacRun, RunConfig, SourceCounts};
use crate::seeding::{stream, Purpose, Rng};
use crate::trainers::gradcheck::{run_suite, FD_STEP};
use crate::trainers::{Family, TrainerConfig, TrainerState};
use rand::Rng as _;
use std::collections::BTreeMap;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn gradients(seeds: usize) -> Result<Check> {
    let rows = run_suite(seeds)?;
    let worst = rows.iter().map(|r| r.max_error).fold(0.0, f64::max);
    let scored = rows.iter().map(|r| r.seeds_scored).min().unwrap_or(0);
    Ok(check(
        "gradients",
        worst < GRADIENT_TOLERANCE && scored >= seeds,
        format!(
            "{} loss/family/activation rows, step {FD_STEP:e}, >= {scored} seeds each, max rel error {worst:.3e}",
            rows.len()
        ),
    ))
}

fn random_buffer(sdim: usize, adim: usize, n: usize, rng: &mut Rng) -> Result<ReplayBuffer> {
    let mut b = ReplayBuffer::new(n)?;
    let mut v = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let ts: Vec<Transition> = (0..n)
        .map(|i| Transition::new(v(sdim), v(adim), v(sdim), v(1)[0], i % 10 == 9))
        .collect();
    b.push(ts)?;
    Ok(b)
}

/// A droq trainer without dropout or layer norm must track sac bit for bit.
pub fn droq_reduces_to_sac(loops: usize) -> Result<Check> {
    let (sdim, adim) = (4, 2);
    let sac_cfg = TrainerConfig::for_family(Family::Sac);
    let droq_cfg = TrainerConfig {
        family: Family::Droq,
        critic_dropout: 0.0,
        critic_layer_norm: false,
        ..sac_cfg.clone()
    };
    let init = || stream(0, Purpose::Check, 1, 0);
    let mut sac = TrainerState::new(sac_cfg, sdim, adim, &mut init())?;
    let mut droq = TrainerState::new(droq_cfg, sdim, adim, &mut init())?;
    let buffer = random_buffer(sdim, adim, 500, &mut stream(0, Purpose::Check, 2, 0))?;
    let (mut ra, mut rb) = (stream(0, Purpose::Check, 3, 0), stream(0, Purpose::Check, 3, 0));
    let mut diverged = None;
    for i in 0..loops {
        sac.train_loop(&buffer, 1, 1, 1, &mut ra)?;
        droq.train_loop(&buffer, 1, 1, 1, &mut rb)?;
        if sac.snapshot_bytes() != droq.snapshot_bytes() {
            diverged = Some(i);
            break;
        }
    }
    Ok(check(
        "droq_reduces_to_sac",
        diverged.is_none(),
        match diverged {
            None => format!("{loops} update loops bit-identical"),
            Some(i) => format!("states differ after loop {i}"),
        },
    ))
}

pub fn small_config() -> RunConfig {
    let mut c = RunConfig::for_family(Family::Td3);
    c.env.episode_length = 20;
    c.batch = 6;
    c.generations = 4;
    c.loops = 3;
    c.variation.g_pg = 5;
    c.trainer.batch_size = 16;
    c.grid_dims = vec![10, 10];
    c
}

pub fn accounting(config: &RunConfig) -> Result<Check> {
    let mut run = GacRun::new(config.clone())?;
    let (b, t) = (config.batch as u64, config.env.episode_length as u64);
    let mut problems = Vec::new();
    let mut prev = run.buffer.len() as u64;
    for _ in 0..config.generations {
        let r = run.step()?;
        if r.buffer_size as u64 - prev != (b + 1) * t {
            problems.push(format!(
                "generation {} pushed {} transitions",
                r.generation,
                r.buffer_size as u64 - prev
            ));
        }
        prev = r.buffer_size as u64;
        let mut recount = SourceCounts::default();
        r.events
            .iter()
            .filter(|e| e.kind.is_addition())
            .for_each(|e| recount.bump(e.source));
        if recount != r.additions {
            problems.push(format!("generation {} additions disagree with events", r.generation));
        }
    }
    let expected = config.n_init() as u64 + config.generations as u64 * (b + 1);
    if run.episodes != expected {
        problems.push(format!("{} episodes, expected {expected}", run.episodes));
    }
    Ok(check(
        "accounting",
        problems.is_empty(),
        if problems.is_empty() {
            format!("{expected} episodes, {} transitions per generation", (b + 1) * t)
        } else {
            problems.join("; ")
        },
    ))
}

pub fn determinism(config: &RunConfig) -> Result<Check> {
    let a = run_gac(config, None)?;
    let b = run_gac(config, None)?;
    let same =
        a.archive.fingerprint() == b.archive.fingerprint() && a.trainer.snapshot_bytes() == b.trainer.snapshot_bytes();
    Ok(check(
        "determinism",
        same,
        format!("archive {}", &a.archive.fingerprint()[..16]),
    ))
}

/// Random insertions against a per-cell maximum kept in a plain map.
pub fn container_oracle(insertions: usize) -> Result<Check> {
    let spec = GridSpec::new(vec![7, 5], vec![0.0, -1.0], vec![1.0, 1.0])?;
    let mut archive = Archive::new(spec.clone());
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rng = stream(0, Purpose::Check, 4, 0);
    let mut qd = f64::NEG_INFINITY;
    let mut monotone = true;
    for i in 0..insertions {
        let d = vec![rng.random_range(-0.2..1.2), rng.random_range(-1.5..1.5)];
        let f = (rng.random_range(0..40) as f64) * 0.25;
        archive.try_insert(vec![i as f64].into(), f, d.clone(), Source::Ga, i as u64)?;
        let cell = spec.grid_index(&d)?;
        let e = best.entry(cell).or_insert(f64::NEG_INFINITY);
        *e = e.max(f);
        let m = archive.metrics(0.0);
        monotone &= m.qd_score >= qd;
        qd = m.qd_score;
    }
    let agree = archive.len() == best.len() && best.iter().all(|(c, f)| archive.get(*c).map(|e| e.fitness) == Some(*f));
    Ok(check(
        "container_oracle",
        agree && monotone,
        format!("{insertions} insertions, {} cells filled", best.len()),
    ))
}

pub fn run_all(gradient_seeds: usize) -> Result<Vec<Check>> {
    let c = small_config();
    Ok(vec![
        gradients(gradient_seeds)?,
        droq_reduces_to_sac(100)?,
        accounting(&c)?,
        determinism(&c)?,
        container_oracle(10_000)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        let c = small_config();
        for ch in [
            gradients(3).unwrap(),
            droq_reduces_to_sac(5).unwrap(),
            accounting(&c).unwrap(),
            determinism(&c).unwrap(),
            container_oracle(500).unwrap(),
        ] {
            assert!(ch.passed, "{}: {}", ch.name, ch.detail);
        }
    }
}
