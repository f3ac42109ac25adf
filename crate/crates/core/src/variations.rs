//! Offspring generators: the iso+line genetic operator and the critic-driven
//! policy-gradient variation.

use crate::datahub::ReplayBuffer;
use crate::error::{Error, Result};
use crate::ndnet::{AdamState, ParamVector};
use crate::seeding::Rng;
use crate::trainers::{Batch, TrainerState};
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug, PartialEq)]
pub struct VariationConfig {
    /// Isotropic Gaussian scale.
    pub iso_sigma: f64,
    /// Scale of the shared step along `parent2 - parent1`.
    pub line_sigma: f64,
    /// Share of each batch produced by policy-gradient variation.
    pub p_pg: f64,
    /// Gradient steps per policy-gradient offspring.
    pub g_pg: usize,
    pub pg_lr: f64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        VariationConfig {
            iso_sigma: 0.01,
            line_sigma: 0.1,
            p_pg: 0.5,
            g_pg: 100,
            pg_lr: 1e-3,
        }
    }
}

impl VariationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iso_sigma >= 0.0 && self.iso_sigma.is_finite()) {
            return Err(Error::config("iso_sigma", "must be non-negative"));
        }
        if !(self.line_sigma >= 0.0 && self.line_sigma.is_finite()) {
            return Err(Error::config("line_sigma", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.p_pg) {
            return Err(Error::config("p_pg", "must lie in [0, 1]"));
        }
        if !(self.pg_lr >= 0.0 && self.pg_lr.is_finite()) {
            return Err(Error::config("pg_lr", "must be non-negative"));
        }
        Ok(())
    }
}

/// `(n_pg, n_ga)`: the first `floor(b * p_pg)` offspring are policy-gradient.
pub fn split_batch(b: usize, p_pg: f64) -> (usize, usize) {
    let n_pg = ((b as f64 * p_pg).floor() as usize).min(b);
    (n_pg, b - n_pg)
}

/// `parent1 + iso_sigma * iso_noise + line_sigma * line_noise * (parent2 - parent1)`.
pub fn iso_line_with(
    parent1: &[f64],
    parent2: &[f64],
    iso_noise: &[f64],
    line_noise: f64,
    cfg: &VariationConfig,
) -> Result<ParamVector> {
    if parent1.len() != parent2.len() || parent1.len() != iso_noise.len() {
        return Err(Error::spec(format!(
            "iso+line over parents of length {} and {} with {} noise values",
            parent1.len(),
            parent2.len(),
            iso_noise.len()
        )));
    }
    Ok(parent1
        .iter()
        .zip(parent2)
        .zip(iso_noise)
        .map(|((&x, &y), &e)| x + cfg.iso_sigma * e + cfg.line_sigma * line_noise * (y - x))
        .collect::<Vec<_>>()
        .into())
}

/// Draws the isotropic noise vector, then the line scalar.
pub fn iso_line(parent1: &[f64], parent2: &[f64], cfg: &VariationConfig, rng: &mut Rng) -> Result<ParamVector> {
    let iso: Vec<f64> = (0..parent1.len()).map(|_| StandardNormal.sample(rng)).collect();
    let line: f64 = StandardNormal.sample(rng);
    iso_line_with(parent1, parent2, &iso, line, cfg)
}

/// Copies `parent` and takes `g_pg` actor steps against the trainer's critics
/// with a fresh optimizer. The trainer is only read.
pub fn pg_variation(
    parent: &[f64],
    trainer: &TrainerState,
    buffer: &ReplayBuffer,
    cfg: &VariationConfig,
    rng: &mut Rng,
) -> Result<ParamVector> {
    if parent.len() != trainer.actor.len() {
        return Err(Error::spec(format!(
            "parent of length {} for an actor of length {}",
            parent.len(),
            trainer.actor.len()
        )));
    }
    let mut child = ParamVector(parent.to_vec());
    if cfg.g_pg == 0 {
        return Ok(child);
    }
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut adam = AdamState::new(child.len());
    let n = trainer.config.batch_size;
    for _ in 0..cfg.g_pg {
        let batch = Batch::sample(buffer, n, rng)?;
        let draws = trainer.draw_actor(n, rng);
        trainer.actor_step(&mut child, &mut adam, cfg.pg_lr, &batch, &draws)?;
    }
    Ok(child)
}
