//! The generation loop: MAP-Elites whose offspring come from genetic and
//! policy-gradient variation, with a shared replay buffer and actor-critic
//! trainer whose greedy actor is offered to the archive every generation.
//!
//! All randomness is drawn from keyed streams (see [`crate::seeding`]), and
//! every result is committed in batch-index order, so a run is bit-identical
//! for a given config whatever the thread count.

mod output;
mod single;

pub use output::{write_generation_row, RunWriter, GENERATION_COLUMNS};
pub use single::{run_single_policy, EvalPoint, SinglePolicyResult};

use crate::container::{Archive, ArchiveMetrics, GridSpec, InsertKind, Source};
use crate::datahub::ReplayBuffer;
use crate::envs::{self, EnvSpec, Trajectory};
use crate::error::{Error, Result};
use crate::ndnet::ParamVector;
use crate::policy::EvalMode;
use crate::seeding::{stream, Purpose};
use crate::trainers::{Family, TrainerConfig, TrainerState, TrainingRow};
use crate::variations::{iso_line, pg_variation, split_batch, VariationConfig};
use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub trainer: TrainerConfig,
    /// Offspring per generation.
    pub batch: usize,
    pub generations: usize,
    /// Update loops per generation.
    pub loops: usize,
    pub critic_steps: usize,
    pub actor_steps: usize,
    pub variation: VariationConfig,
    pub grid_dims: Vec<usize>,
    pub buffer_capacity: usize,
    pub seed: u64,
    /// `None` means twice the batch.
    pub n_init: Option<usize>,
    pub eval_mode: EvalMode,
    /// Write measured wall time into the generation log instead of 0.
    pub record_wall_time: bool,
    pub heatmap: bool,
    pub single: SinglePolicyConfig,
}

/// Settings only the single-policy baseline reads.
#[derive(Clone, Debug, PartialEq)]
pub struct SinglePolicyConfig {
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Gaussian action noise for TD3 exploration.
    pub exploration_noise: f64,
}

impl Default for SinglePolicyConfig {
    fn default() -> Self {
        SinglePolicyConfig {
            total_steps: 20_000,
            warmup_steps: 1_000,
            eval_every: 1_000,
            eval_episodes: 1,
            exploration_noise: 0.1,
        }
    }
}

/// Critic steps per update loop for each family's reference setup.
pub fn default_critic_steps(family: Family) -> usize {
    match family {
        Family::Td3 => 2,
        Family::Sac => 1,
        Family::Droq => 20,
    }
}

impl RunConfig {
    pub fn for_family(family: Family) -> Self {
        RunConfig {
            env: EnvSpec::point_gait(),
            trainer: TrainerConfig::for_family(family),
            batch: 32,
            generations: 300,
            loops: 150,
            critic_steps: default_critic_steps(family),
            actor_steps: 1,
            variation: VariationConfig::default(),
            grid_dims: vec![50, 50],
            buffer_capacity: 100_000,
            seed: 0,
            n_init: None,
            eval_mode: EvalMode::Deterministic,
            record_wall_time: false,
            heatmap: true,
            single: SinglePolicyConfig::default(),
        }
    }

    pub fn family(&self) -> Family {
        self.trainer.family
    }

    pub fn n_init(&self) -> usize {
        self.n_init.unwrap_or(2 * self.batch)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let (lower, upper) = self.env.descriptor_bounds();
        if self.grid_dims.len() != lower.len() {
            return Err(Error::config(
                "grid_dims",
                format!("{} axes for a {}-D descriptor", self.grid_dims.len(), lower.len()),
            ));
        }
        GridSpec::new(self.grid_dims.clone(), lower, upper).map_err(|e| Error::config("grid_dims", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.trainer.validate()?;
        self.variation.validate()?;
        self.grid()?;
        if self.batch == 0 {
            return Err(Error::config("B", "must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be positive"));
        }
        if self.single.eval_every == 0 {
            return Err(Error::config("eval_every", "must be positive"));
        }
        if !(self.single.exploration_noise >= 0.0 && self.single.exploration_noise.is_finite()) {
            return Err(Error::config("exploration_noise", "must be non-negative"));
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_family(Family::Td3)
    }
}

/// Per-source counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SourceCounts {
    pub ga: u64,
    pub pg: u64,
    pub actor: u64,
}

impl SourceCounts {
    pub fn bump(&mut self, source: Source) {
        match source {
            Source::Ga => self.ga += 1,
            Source::Pg => self.pg += 1,
            Source::Actor => self.actor += 1,
            Source::Init => {}
        }
    }

    pub fn total(&self) -> u64 {
        self.ga + self.pg + self.actor
    }
}

/// One attempted archive insertion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InsertEvent {
    pub generation: u64,
    /// Position in the generation's evaluation order; the actor comes last.
    pub index: usize,
    pub source: Source,
    pub kind: InsertKind,
    pub cell: usize,
    pub fitness_delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationReport {
    pub generation: u64,
    pub env_steps_cum: u64,
    pub episodes_cum: u64,
    pub buffer_size: usize,
    pub metrics: ArchiveMetrics,
    pub evaluated: SourceCounts,
    pub additions: SourceCounts,
    pub critic_loss_mean: Option<f64>,
    pub actor_loss_mean: Option<f64>,
    pub alpha: Option<f64>,
    pub wall_time_s: f64,
    pub events: Vec<InsertEvent>,
    pub training: Vec<TrainingRow>,
}

/// Thread pool sized by `GACQD_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GACQD_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::config("GACQD_THREADS", format!("`{v}` is not a positive integer")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::spec(format!("thread pool: {e}")))
}

pub struct GacRun {
    pub config: RunConfig,
    pub archive: Archive,
    pub buffer: ReplayBuffer,
    pub trainer: TrainerState,
    /// Last completed generation; 0 after initialization.
    pub generation: u64,
    pub episodes: u64,
    pub env_steps: u64,
    pub init_events: Vec<InsertEvent>,
    last_metrics: ArchiveMetrics,
    pool: rayon::ThreadPool,
}

fn evaluate(
    config: &RunConfig,
    trainer: &TrainerState,
    genotype: &[f64],
    purpose: Purpose,
    gen: u64,
    index: u64,
) -> Result<Trajectory> {
    let mut rng = stream(config.seed, purpose, gen, index);
    envs::rollout(&config.env, &trainer.policy(genotype), config.eval_mode, &mut rng)
}

impl GacRun {
    /// Builds the trainer, then evaluates and inserts `n_init` random
    /// genotypes and pushes their transitions.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let pool = thread_pool()?;
        let env = &config.env;
        let trainer = TrainerState::new(
            config.trainer.clone(),
            env.state_dim(),
            env.action_dim(),
            &mut stream(config.seed, Purpose::TrainerInit, 0, 0),
        )?;
        let mut run = GacRun {
            archive: Archive::new(config.grid()?),
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            generation: 0,
            episodes: 0,
            env_steps: 0,
            init_events: Vec::new(),
            last_metrics: ArchiveMetrics {
                qd_score: 0.0,
                coverage: 0.0,
                max_fitness: None,
            },
            trainer,
            pool,
            config,
        };
        let n = run.config.n_init();
        let (config, trainer) = (&run.config, &run.trainer);
        let evaluated: Vec<(ParamVector, Trajectory)> = run.pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let g = trainer
                        .actor_spec
                        .init_params(&mut stream(config.seed, Purpose::InitGenotype, 0, i as u64), 0.01);
                    let traj = evaluate(config, trainer, &g, Purpose::InitEval, 0, i as u64)?;
                    Ok((g, traj))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut events = Vec::with_capacity(n);
        for (index, (g, traj)) in evaluated.into_iter().enumerate() {
            events.push(run.commit(g, traj, Source::Init, index)?);
        }
        run.init_events = events;
        run.last_metrics = run.archive.metrics(run.config.env.fitness_floor());
        Ok(run)
    }

    fn commit(&mut self, genotype: ParamVector, traj: Trajectory, source: Source, index: usize) -> Result<InsertEvent> {
        self.episodes += 1;
        self.env_steps += traj.transitions.len() as u64;
        self.buffer.push(traj.transitions)?;
        let o = self
            .archive
            .try_insert(genotype, traj.fitness, traj.descriptor, source, self.generation)?;
        Ok(InsertEvent {
            generation: self.generation,
            index,
            source,
            kind: o.kind,
            cell: o.cell,
            fitness_delta: o.fitness_delta,
        })
    }

    /// Runs one generation.
    pub fn step(&mut self) -> Result<GenerationReport> {
        let start = Instant::now();
        let gen = self.generation + 1;
        let cfg = &self.config;
        let b = cfg.batch;
        let (n_pg, _) = split_batch(b, cfg.variation.p_pg);

        let parents: Vec<ParamVector> = self
            .archive
            .select_uniform(&mut stream(cfg.seed, Purpose::Select, gen, 0), b)?
            .into_iter()
            .map(|e| e.genotype.clone())
            .collect();

        let (archive, trainer, buffer) = (&self.archive, &self.trainer, &self.buffer);
        let offspring: Vec<(ParamVector, Source, Trajectory)> = self.pool.install(|| {
            (0..=b)
                .into_par_iter()
                .map(|i| {
                    if i == b {
                        let g = trainer.actor.clone();
                        let traj = evaluate(cfg, trainer, &g, Purpose::Eval, gen, i as u64)?;
                        return Ok((g, Source::Actor, traj));
                    }
                    let mut rng = stream(cfg.seed, Purpose::Offspring, gen, i as u64);
                    let (child, source) = if i < n_pg {
                        (
                            pg_variation(&parents[i], trainer, buffer, &cfg.variation, &mut rng)?,
                            Source::Pg,
                        )
                    } else {
                        let mate = &archive.select_uniform(&mut rng, 1)?[0].genotype;
                        (iso_line(&parents[i], mate, &cfg.variation, &mut rng)?, Source::Ga)
                    };
                    let traj = evaluate(cfg, trainer, &child, Purpose::Eval, gen, i as u64)?;
                    Ok((child, source, traj))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        self.generation = gen;
        let mut evaluated = SourceCounts::default();
        let mut additions = SourceCounts::default();
        let mut events = Vec::with_capacity(b + 1);
        for (index, (g, source, traj)) in offspring.into_iter().enumerate() {
            evaluated.bump(source);
            let ev = self.commit(g, traj, source, index)?;
            if ev.kind.is_addition() {
                additions.bump(source);
            }
            events.push(ev);
        }

        let training = self.trainer.train_loop(
            &self.buffer,
            self.config.loops,
            self.config.critic_steps,
            self.config.actor_steps,
            &mut stream(self.config.seed, Purpose::Train, gen, 0),
        )?;
        let mean_of = |f: fn(&TrainingRow) -> Option<f64>| {
            let v: Vec<f64> = training.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };

        let metrics = self.archive.metrics(self.config.env.fitness_floor());
        if metrics.qd_score < self.last_metrics.qd_score || metrics.coverage < self.last_metrics.coverage {
            return Err(Error::spec(format!(
                "archive metrics decreased at generation {gen}: qd {} -> {}, coverage {} -> {}",
                self.last_metrics.qd_score, metrics.qd_score, self.last_metrics.coverage, metrics.coverage
            )));
        }
        self.last_metrics = metrics;

        Ok(GenerationReport {
            generation: gen,
            env_steps_cum: self.env_steps,
            episodes_cum: self.episodes,
            buffer_size: self.buffer.len(),
            metrics,
            evaluated,
            additions,
            critic_loss_mean: mean_of(|r| r.critic_loss),
            actor_loss_mean: mean_of(|r| r.actor_loss),
            alpha: self.trainer.family().is_max_entropy().then(|| self.trainer.alpha()),
            wall_time_s: start.elapsed().as_secs_f64(),
            events,
            training,
        })
    }
}

pub struct GacResult {
    pub archive: Archive,
    pub reports: Vec<GenerationReport>,
    pub init_events: Vec<InsertEvent>,
    pub trainer: TrainerState,
}

/// Runs a full experiment, optionally logging into `out`.
///
/// Log rows are flushed every generation and the archive is dumped even when
/// a generation fails, so partial results survive an error.
pub fn run_gac(config: &RunConfig, out: Option<&Path>) -> Result<GacResult> {
    let mut run = GacRun::new(config.clone())?;
    let mut writer = out.map(|dir| RunWriter::create(dir, config)).transpose()?;
    if let Some(w) = writer.as_mut() {
        w.write_events(&run.init_events)?;
    }
    let mut reports = Vec::with_capacity(config.generations);
    let mut failure = None;
    for _ in 0..config.generations {
        match run.step() {
            Ok(rep) => {
                if let Some(w) = writer.as_mut() {
                    w.write_generation(&rep, config.family())?;
                }
                reports.push(rep);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    if let Some(w) = writer.as_mut() {
        w.finish(&run.archive)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(GacResult {
        archive: run.archive,
        reports,
        init_events: run.init_events,
        trainer: run.trainer,
    })
}

/// Mean additions per generation for each source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Utility {
    pub ga: f64,
    pub pg: f64,
    pub actor: f64,
}

pub fn utility_summary(reports: &[GenerationReport]) -> Result<Utility> {
    if reports.is_empty() {
        return Err(Error::spec("utility of an empty run"));
    }
    let n = reports.len() as f64;
    let sum = |f: fn(&SourceCounts) -> u64| reports.iter().map(|r| f(&r.additions)).sum::<u64>() as f64 / n;
    Ok(Utility {
        ga: sum(|c| c.ga),
        pg: sum(|c| c.pg),
        actor: sum(|c| c.actor),
    })
}
