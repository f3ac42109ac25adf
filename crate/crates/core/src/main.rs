use clap::{Parser, Subcommand};
use gacqd::container::{heatmap_svg, read_dump, read_dump_header, write_dump};
use gacqd::envs::{EnvKind, EnvSpec};
use gacqd::error::{Error, Result};
use gacqd::expcli::config::{header_lines, parse_config};
use gacqd::expcli::{apply_paper_scale, run_preset, selfcheck, Preset, RunKind, Variant, DEFAULT_SEEDS};
use gacqd::gacloop::RunConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gacqd",
    version,
    about = "MAP-Elites with actor-critic policy-gradient variations"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run one configuration, once per seed.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds; each gets `OUT/seed_<s>`. Without it the
        /// config's seed runs directly into OUT.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        paper_scale: bool,
        /// Run the single-policy baseline instead of the generation loop.
        #[arg(long)]
        single_policy: bool,
    },
    /// Run a named study over several seeds.
    Preset {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        paper_scale: bool,
    },
    /// Print metrics of an archive dump and render its heatmap.
    Dump {
        #[arg(long)]
        archive: PathBuf,
        /// Defaults to the archive directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient and invariant self-test.
    Check {
        /// Accepted probes per gradient row.
        #[arg(long, default_value_t = 20)]
        gradient_seeds: usize,
    },
}

fn load(config: Option<&Path>, paper_scale: bool) -> Result<RunConfig> {
    let mut c = match config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if paper_scale {
        apply_paper_scale(&mut c);
        c.validate()?;
    }
    Ok(c)
}

fn echo(c: &RunConfig) {
    for line in header_lines(c) {
        println!("# {line}");
    }
}

fn run(config: Option<&Path>, out: &Path, seeds: Option<Vec<u64>>, paper_scale: bool, single: bool) -> Result<u8> {
    let c = load(config, paper_scale)?;
    echo(&c);
    let v = Variant {
        name: String::new(),
        kind: if single { RunKind::SinglePolicy } else { RunKind::Gac },
        config: c.clone(),
    };
    let Some(seeds) = seeds else {
        let m = gacqd::expcli::run_variant(&v, c.seed, out)?;
        println!("{m:?}");
        return Ok(0);
    };
    let mut failed = 0;
    for &s in &seeds {
        match gacqd::expcli::run_variant(&v, s, &out.join(format!("seed_{s}"))) {
            Ok(m) => println!("seed {s}: {m:?}"),
            Err(e) => {
                eprintln!("seed {s} failed: {e}");
                failed += 1;
            }
        }
    }
    Ok(if failed == 0 { 0 } else { 3 })
}

fn preset(name: &str, config: Option<&Path>, out: &Path, seeds: Option<Vec<u64>>, paper_scale: bool) -> Result<u8> {
    let p = Preset::parse(name).ok_or_else(|| {
        let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
        Error::Config {
            key: "preset".into(),
            message: format!("unknown preset `{name}`, expected one of {}", names.join(", ")),
        }
    })?;
    let base = load(config, false)?;
    echo(&base);
    let seeds = seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    let outcome = run_preset(p, &base, &seeds, paper_scale, out, |variant, seed, r| match r {
        Ok(_) => println!("{variant} seed {seed}: ok"),
        Err(e) => eprintln!("{variant} seed {seed}: failed: {e}"),
    })?;
    println!("summary written to {}", out.join("summary.csv").display());
    Ok(if outcome.failures() == 0 { 0 } else { 3 })
}

fn dump(archive_dir: &Path, out: Option<&Path>) -> Result<u8> {
    let archive = read_dump(archive_dir)?;
    let header = read_dump_header(archive_dir)?;
    let env = header
        .iter()
        .rev()
        .find_map(|l| l.strip_prefix("env=").and_then(EnvKind::parse))
        .map(EnvSpec::of_kind);
    let floor = env.as_ref().map_or(0.0, EnvSpec::fitness_floor);
    let m = archive.metrics(floor);
    println!(
        "cells {} of {}, qd_score {}, coverage {}, max_fitness {}",
        archive.len(),
        archive.spec().cell_count(),
        m.qd_score,
        m.coverage,
        m.max_fitness.map_or("none".into(), |f| f.to_string())
    );
    let out = out.unwrap_or(archive_dir);
    std::fs::create_dir_all(out)?;
    if out != archive_dir {
        write_dump(&archive, out, &header)?;
    }
    if archive.spec().dims().len() == 2 {
        let svg = heatmap_svg(&archive, &archive_dir.display().to_string())?;
        std::fs::write(out.join("heatmap.svg"), svg)?;
        println!("heatmap written to {}", out.join("heatmap.svg").display());
    }
    Ok(0)
}

fn check(gradient_seeds: usize) -> Result<u8> {
    let checks = selfcheck::run_all(gradient_seeds)?;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.verb {
        Verb::Run {
            config,
            out,
            seeds,
            paper_scale,
            single_policy,
        } => run(config.as_deref(), &out, seeds, paper_scale, single_policy),
        Verb::Preset {
            preset: name,
            config,
            out,
            seeds,
            paper_scale,
        } => preset(&name, config.as_deref(), &out, seeds, paper_scale),
        Verb::Dump { archive, out } => dump(&archive, out.as_deref()),
        Verb::Check { gradient_seeds } => check(gradient_seeds),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
