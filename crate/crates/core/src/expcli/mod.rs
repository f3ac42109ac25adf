//! Experiment presets, multi-seed orchestration and summaries.

pub mod config;
pub mod selfcheck;

use crate::error::{Error, Result};
use crate::gacloop::{default_critic_steps, run_gac, run_single_policy, utility_summary, RunConfig, Utility};
use crate::trainers::Family;
use config::{apply_family, header_lines};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    CompareFamilies,
    GSweep,
    UtilityTable,
    RlBaselines,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::CompareFamilies,
        Preset::GSweep,
        Preset::UtilityTable,
        Preset::RlBaselines,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::CompareFamilies => "compare_families",
            Preset::GSweep => "g_sweep",
            Preset::UtilityTable => "utility_table",
            Preset::RlBaselines => "rl_baselines",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Update-loop counts swept by `g_sweep` and `utility_table`.
    pub fn g_values(self, paper_scale: bool) -> Vec<usize> {
        match (self, paper_scale) {
            (Preset::GSweep, false) => vec![15, 50, 250, 500, 2500],
            (Preset::GSweep, true) => vec![150, 500, 2500, 5000, 25000],
            (Preset::UtilityTable, false) => vec![15, 250],
            (Preset::UtilityTable, true) => vec![150, 2500],
            _ => Vec::new(),
        }
    }
}

/// Sizes of the reference setup: larger batch, episodes, buffer and networks.
pub fn apply_paper_scale(c: &mut RunConfig) {
    c.batch = 128;
    c.env.episode_length = 1000;
    c.trainer.batch_size = 256;
    c.buffer_capacity = 1_000_000;
    c.trainer.policy_hidden = vec![64, 64];
    c.trainer.critic_hidden = vec![256, 256];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Gac,
    SinglePolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    /// Also the run directory name.
    pub name: String,
    pub kind: RunKind,
    pub config: RunConfig,
}

fn with_family(base: &RunConfig, family: Family, critic_steps: usize) -> RunConfig {
    let mut c = base.clone();
    apply_family(&mut c, family);
    c.critic_steps = critic_steps;
    c
}

pub fn variants(preset: Preset, base: &RunConfig, paper_scale: bool) -> Vec<Variant> {
    let mut base = base.clone();
    if paper_scale {
        apply_paper_scale(&mut base);
    }
    let gac = |name: String, config: RunConfig| Variant {
        name,
        kind: RunKind::Gac,
        config,
    };
    match preset {
        Preset::CompareFamilies => vec![
            gac("td3".into(), with_family(&base, Family::Td3, 2)),
            gac("sac".into(), with_family(&base, Family::Sac, 1)),
            gac("droq-reg".into(), with_family(&base, Family::Droq, 1)),
            gac("droq-reg-cutd".into(), with_family(&base, Family::Droq, 20)),
        ],
        Preset::GSweep | Preset::UtilityTable => preset
            .g_values(paper_scale)
            .into_iter()
            .map(|g| {
                let mut c = base.clone();
                c.loops = g;
                gac(format!("G{g}"), c)
            })
            .collect(),
        Preset::RlBaselines => [Family::Td3, Family::Sac, Family::Droq]
            .into_iter()
            .map(|f| Variant {
                name: f.name().to_string(),
                kind: RunKind::SinglePolicy,
                config: with_family(&base, f, default_critic_steps(f)),
            })
            .collect(),
    }
}

/// Final numbers of one finished run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FinalMetrics {
    pub qd_score: Option<f64>,
    pub coverage: Option<f64>,
    pub max_fitness: Option<f64>,
    pub utility: Option<Utility>,
    pub eval_return: Option<f64>,
}

impl FinalMetrics {
    /// `(name, value)` for every metric the summary aggregates.
    pub fn named(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("qd_score", self.qd_score),
            ("coverage", self.coverage),
            ("max_fitness", self.max_fitness),
            ("util_ga", self.utility.map(|u| u.ga)),
            ("util_pg", self.utility.map(|u| u.pg)),
            ("util_actor", self.utility.map(|u| u.actor)),
            ("final_eval_return", self.eval_return),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub variant: String,
    pub seed: u64,
    pub outcome: std::result::Result<FinalMetrics, String>,
}

pub fn run_dir(out: &Path, variant: &str, seed: u64) -> PathBuf {
    out.join(variant).join(format!("seed_{seed}"))
}

/// Runs one variant for one seed, logging into `dir`.
pub fn run_variant(v: &Variant, seed: u64, dir: &Path) -> Result<FinalMetrics> {
    let mut c = v.config.clone();
    c.seed = seed;
    match v.kind {
        RunKind::Gac => {
            let r = run_gac(&c, Some(dir))?;
            let m = r.archive.metrics(c.env.fitness_floor());
            Ok(FinalMetrics {
                qd_score: Some(m.qd_score),
                coverage: Some(m.coverage),
                max_fitness: m.max_fitness,
                utility: (!r.reports.is_empty())
                    .then(|| utility_summary(&r.reports))
                    .transpose()?,
                eval_return: None,
            })
        }
        RunKind::SinglePolicy => {
            let r = run_single_policy(&c, Some(dir))?;
            Ok(FinalMetrics {
                eval_return: r.evals.last().map(|e| e.eval_return),
                ..Default::default()
            })
        }
    }
}

/// Linearly interpolated sample quantile (Hyndman-Fan type 7).
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub const RUNS_COLUMNS: &str =
    "variant,seed,status,qd_score,coverage,max_fitness,util_ga,util_pg,util_actor,final_eval_return,error";
pub const SUMMARY_COLUMNS: &str = "variant,metric,n,median,q1,q3";

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn header(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

pub fn runs_csv(records: &[RunRecord], head: &[String]) -> String {
    let mut s = header(head);
    s.push_str(RUNS_COLUMNS);
    s.push('\n');
    for r in records {
        let (status, m, err) = match &r.outcome {
            Ok(m) => ("ok", *m, String::new()),
            Err(e) => ("failed", FinalMetrics::default(), csv_field(e)),
        };
        let vals: Vec<String> = m.named().iter().map(|(_, v)| num(*v)).collect();
        let _ = writeln!(s, "{},{},{status},{},{err}", r.variant, r.seed, vals.join(","));
    }
    s
}

/// Median and quartiles over seeds of every metric, per variant, counting
/// only runs that finished and reported the metric.
pub fn summary_csv(variant_names: &[String], records: &[RunRecord], head: &[String]) -> String {
    let mut s = header(head);
    s.push_str(SUMMARY_COLUMNS);
    s.push('\n');
    for name in variant_names {
        let metrics: Vec<FinalMetrics> = records
            .iter()
            .filter(|r| &r.variant == name)
            .filter_map(|r| r.outcome.as_ref().ok().copied())
            .collect();
        for k in 0..FinalMetrics::default().named().len() {
            let metric = FinalMetrics::default().named()[k].0;
            let mut vals: Vec<f64> = metrics.iter().filter_map(|m| m.named()[k].1).collect();
            if vals.is_empty() {
                continue;
            }
            vals.sort_by(f64::total_cmp);
            let _ = writeln!(
                s,
                "{name},{metric},{},{},{},{}",
                vals.len(),
                num(quantile(&vals, 0.5)),
                num(quantile(&vals, 0.25)),
                num(quantile(&vals, 0.75))
            );
        }
    }
    s
}

/// Mean over seeds of each source's addition utility; sources as rows and
/// update-loop counts as columns.
pub fn utility_table_csv(variant_list: &[Variant], records: &[RunRecord], head: &[String]) -> String {
    let mut s = header(head);
    s.push_str("source");
    for v in variant_list {
        let _ = write!(s, ",{}", v.name);
    }
    s.push('\n');
    type Pick = fn(&Utility) -> f64;
    let sources: [(&str, Pick); 3] = [("ga", |u| u.ga), ("pg", |u| u.pg), ("actor", |u| u.actor)];
    for (label, pick) in sources {
        s.push_str(label);
        for v in variant_list {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.variant == v.name)
                .filter_map(|r| r.outcome.as_ref().ok().and_then(|m| m.utility))
                .map(|u| pick(&u))
                .collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            let _ = write!(s, ",{}", num(mean));
        }
        s.push('\n');
    }
    s
}

pub struct PresetOutcome {
    pub records: Vec<RunRecord>,
}

impl PresetOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Runs every (variant, seed) pair of `preset` into its own directory under
/// `out`, then writes `runs.csv`, `summary.csv` and, for `utility_table`,
/// `utility_table.csv`. A failing run is recorded and the rest continue.
pub fn run_preset(
    preset: Preset,
    base: &RunConfig,
    seeds: &[u64],
    paper_scale: bool,
    out: &Path,
    mut progress: impl FnMut(&str, u64, &std::result::Result<FinalMetrics, String>),
) -> Result<PresetOutcome> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    let list = variants(preset, base, paper_scale);
    for v in &list {
        v.config.validate()?;
    }
    fs::create_dir_all(out)?;
    let mut records = Vec::new();
    for v in &list {
        for &seed in seeds {
            let outcome = run_variant(v, seed, &run_dir(out, &v.name, seed)).map_err(|e| e.to_string());
            progress(&v.name, seed, &outcome);
            records.push(RunRecord {
                variant: v.name.clone(),
                seed,
                outcome,
            });
        }
    }

    let mut head = header_lines(base);
    head.push(format!("preset={}", preset.name()));
    head.push(format!("paper_scale={paper_scale}"));
    head.push(format!(
        "seeds={}",
        seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
    ));
    let names: Vec<String> = list.iter().map(|v| v.name.clone()).collect();
    fs::write(out.join("runs.csv"), runs_csv(&records, &head))?;
    fs::write(out.join("summary.csv"), summary_csv(&names, &records, &head))?;
    if preset == Preset::UtilityTable {
        fs::write(out.join("utility_table.csv"), utility_table_csv(&list, &records, &head))?;
    }
    Ok(PresetOutcome { records })
}

#[cfg(test)]
mod tests;
