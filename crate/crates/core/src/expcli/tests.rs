use super::*;
use crate::envs::EnvKind;
use crate::expcli::config::apply_env;
use std::collections::BTreeMap;

fn tiny() -> RunConfig {
    let mut c = RunConfig::for_family(Family::Td3);
    c.env.episode_length = 10;
    c.batch = 3;
    c.generations = 2;
    c.loops = 2;
    c.variation.g_pg = 2;
    c.trainer.batch_size = 8;
    c.grid_dims = vec![6, 6];
    c.single.total_steps = 20;
    c.single.warmup_steps = 5;
    c.single.eval_every = 10;
    c
}

#[test]
fn preset_names_round_trip() {
    for p in Preset::ALL {
        assert_eq!(Preset::parse(p.name()), Some(p));
    }
    assert_eq!(Preset::parse("nope"), None);
}

#[test]
fn compare_families_variants() {
    let v = variants(Preset::CompareFamilies, &RunConfig::default(), false);
    let got: Vec<(&str, Family, usize, f64)> = v
        .iter()
        .map(|x| {
            (
                x.name.as_str(),
                x.config.family(),
                x.config.critic_steps,
                x.config.trainer.critic_dropout,
            )
        })
        .collect();
    assert_eq!(
        got,
        vec![
            ("td3", Family::Td3, 2, 0.0),
            ("sac", Family::Sac, 1, 0.0),
            ("droq-reg", Family::Droq, 1, 0.01),
            ("droq-reg-cutd", Family::Droq, 20, 0.01),
        ]
    );
    assert!(v.iter().all(|x| x.kind == RunKind::Gac && x.config.loops == 150));
}

#[test]
fn sweep_values() {
    let desk = variants(Preset::GSweep, &RunConfig::default(), false);
    assert_eq!(
        desk.iter().map(|v| v.config.loops).collect::<Vec<_>>(),
        vec![15, 50, 250, 500, 2500]
    );
    let large = variants(Preset::GSweep, &RunConfig::default(), true);
    assert_eq!(
        large.iter().map(|v| v.config.loops).collect::<Vec<_>>(),
        vec![150, 500, 2500, 5000, 25000]
    );
    assert!(large
        .iter()
        .all(|v| v.config.batch == 128 && v.config.env.episode_length == 1000));
    assert_eq!(large[0].config.trainer.critic_hidden, vec![256, 256]);
    assert_eq!(variants(Preset::UtilityTable, &RunConfig::default(), false).len(), 2);
    let rl = variants(Preset::RlBaselines, &RunConfig::default(), false);
    assert!(rl.iter().all(|v| v.kind == RunKind::SinglePolicy));
    assert_eq!(rl[2].config.critic_steps, 20);
}

#[test]
fn quantile_examples() {
    assert_eq!(quantile(&[], 0.5), None);
    assert_eq!(quantile(&[3.0], 0.25), Some(3.0));
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), Some(3.0));
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), Some(2.0));
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), Some(2.5));
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), Some(1.75));
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.75), Some(3.25));
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Median and quartiles by sorting and reading off fractional positions.
fn brute_quartiles(mut v: Vec<f64>) -> [f64; 3] {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let i = pos as usize;
        if i + 1 < v.len() {
            v[i] * (1.0 - (pos - i as f64)) + v[i + 1] * (pos - i as f64)
        } else {
            v[i]
        }
    };
    [at(0.5), at(0.25), at(0.75)]
}

#[test]
fn summary_matches_per_run_logs() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = [0, 1, 2, 5];
    let out = run_preset(
        Preset::UtilityTable,
        &{
            let mut c = tiny();
            c.loops = 1;
            c
        },
        &seeds,
        false,
        dir.path(),
        |_, _, _| {},
    )
    .unwrap();
    assert_eq!(out.failures(), 0);

    let mut per_metric: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for v in ["G15", "G250"] {
        for s in seeds {
            let gens = fs::read_to_string(run_dir(dir.path(), v, s).join("generations.csv")).unwrap();
            let rows = data_rows(&gens);
            let last = rows.last().unwrap();
            for (name, col) in [("qd_score", 2), ("coverage", 3), ("max_fitness", 4)] {
                per_metric
                    .entry((v.into(), name.into()))
                    .or_default()
                    .push(last[col].parse().unwrap());
            }
            for (name, col) in [("util_ga", 5), ("util_pg", 6), ("util_actor", 7)] {
                let mean = rows.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / rows.len() as f64;
                per_metric.entry((v.into(), name.into())).or_default().push(mean);
            }
        }
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let rows = data_rows(&summary);
    assert_eq!(rows.len(), per_metric.len());
    for r in rows {
        let vals = per_metric[&(r[0].clone(), r[1].clone())].clone();
        assert_eq!(r[2], vals.len().to_string());
        let q = brute_quartiles(vals);
        for k in 0..3 {
            let got: f64 = r[3 + k].parse().unwrap();
            assert!((got - q[k]).abs() <= 1e-12 * q[k].abs().max(1.0), "{r:?} vs {q:?}");
        }
    }
    let table = fs::read_to_string(dir.path().join("utility_table.csv")).unwrap();
    let body: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "source,G15,G250");
    assert_eq!(body.len(), 4);
    assert!(summary.starts_with("# version=gacqd "));
    assert!(summary.contains("# preset=utility_table\n"));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        run_preset(Preset::CompareFamilies, &tiny(), &[0, 1], false, d.path(), |_, _, _| {}).unwrap();
    }
    let mut files = Vec::new();
    for v in ["td3", "sac", "droq-reg", "droq-reg-cutd"] {
        for s in [0, 1] {
            for f in [
                "generations.csv",
                "events.csv",
                "training.csv",
                "archive.csv",
                "archive.bin",
                "heatmap.svg",
            ] {
                files.push(run_dir(Path::new(""), v, s).join(f));
            }
        }
    }
    files.push("summary.csv".into());
    files.push("runs.csv".into());
    for f in files {
        assert_eq!(
            fs::read(a.path().join(&f)).unwrap(),
            fs::read(b.path().join(&f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

#[test]
fn single_policy_preset() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = tiny();
    apply_env(&mut base, EnvKind::Bandit);
    let out = run_preset(Preset::RlBaselines, &base, &[3], false, dir.path(), |_, _, _| {}).unwrap();
    assert_eq!(out.records.len(), 3);
    for r in &out.records {
        let m = r.outcome.as_ref().unwrap();
        assert!(m.eval_return.is_some() && m.qd_score.is_none());
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(data_rows(&summary).len(), 3);
}

#[test]
fn failed_runs_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    // a plain file where the run directory should go
    fs::create_dir_all(dir.path().join("sac")).unwrap();
    fs::write(dir.path().join("sac").join("seed_0"), "x").unwrap();
    let mut count = 0;
    let out = run_preset(Preset::CompareFamilies, &tiny(), &[0], false, dir.path(), |_, _, _| {
        count += 1
    })
    .unwrap();
    assert_eq!(count, 4);
    assert_eq!(out.failures(), 1);
    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let failed: Vec<Vec<String>> = data_rows(&runs).into_iter().filter(|r| r[2] == "failed").collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0][0], "sac");
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(!data_rows(&summary).iter().any(|r| r[0] == "sac"));
}

#[test]
fn invalid_variants_abort_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.batch = 0;
    let e = run_preset(Preset::GSweep, &c, &[0], false, dir.path(), |_, _, _| {})
        .err()
        .unwrap();
    assert_eq!(e.exit_code(), 1);
    assert!(run_preset(Preset::GSweep, &tiny(), &[], false, dir.path(), |_, _, _| {}).is_err());
}
