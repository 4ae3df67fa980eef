use std::fs;

use nrules::analysis::*;
use nrules::decoherence::PartitionSpec;
use nrules::io::*;
use nrules::reduction::{RngStream, StepChecks};
use nrules::scenario::*;

fn quiet(n_traj: usize, seed: u64) -> EnsembleOptions {
    EnsembleOptions { n_traj, seed, checks: StepChecks { enabled: false }, keep_series: 0, ..Default::default() }
}

#[test]
fn single_trajectory_ensemble_matches_its_record() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Case1)).unwrap();
    for seed in 0..6 {
        let r = run_ensemble(&scenario, &EnsembleOptions { keep_series: 1, ..quiet(1, seed) }).unwrap();
        let rec = &r.records[0];
        assert_eq!(r.summary.n_completed, 1);
        assert_eq!(r.summary.hits.iter().sum::<usize>() + r.summary.no_hit, 1);
        let direct = run_trajectory(
            &scenario,
            &mut RngStream::new(seed, 0),
            RunOptions { checks: StepChecks { enabled: false }, ..RunOptions::default() },
        )
        .unwrap();
        assert_eq!(rec, &direct);
        match rec.first_event() {
            Some(e) => {
                assert_eq!(r.summary.hits[e.channel], 1);
                assert_eq!(r.summary.post_variance.mean, e.post_variance);
            }
            None => assert_eq!(r.summary.no_hit, 1),
        }
    }
}

#[test]
fn series_times_strictly_increase() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Case2)).unwrap();
    let r = run_ensemble(&scenario, &EnsembleOptions { keep_series: 20, ..quiet(20, 3) }).unwrap();
    for rec in &r.records {
        assert!(rec.series.windows(2).all(|w| w[1].t > w[0].t));
        assert!(rec.series.len() <= DEFAULT_SERIES_ROWS);
        if let Some(e) = rec.first_event() {
            let last = rec.series.last().unwrap();
            assert_eq!(last.t, e.t_state);
            assert_eq!(last.variance, e.post_variance);
        }
    }
}

#[test]
fn baseline_against_itself_has_unit_factor() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Baseline)).unwrap();
    let r = run_ensemble(&scenario, &quiet(3, 1)).unwrap();
    let report = localization_report(&r.variance, &r.variance).unwrap();
    assert_eq!(report.reduction_factor, 1.0);
    assert!(report.rows.iter().all(|row| row.factor == 1.0));
}

#[test]
fn mismatched_tables_are_rejected() {
    let a = run_ensemble(&build(&ScenarioConfig::default_for(CaseId::Baseline)).unwrap(), &quiet(1, 1)).unwrap();
    let mut cfg = ScenarioConfig::default_for(CaseId::Baseline);
    cfg.t_max = 5.0;
    let b = run_ensemble(&build(&cfg).unwrap(), &quiet(1, 1)).unwrap();
    assert!(matches!(localization_report(&a.variance, &b.variance), Err(nrules::Error::Argument(_))));
    let mut cfg = ScenarioConfig::default_for(CaseId::Baseline);
    cfg.grid.dx = 0.05;
    let c = run_ensemble(&build(&cfg).unwrap(), &quiet(1, 1)).unwrap();
    assert!(localization_report(&a.variance, &c.variance).is_err());
}

#[test]
fn case1_window_localizes() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Case1)).unwrap();
    let r = run_ensemble(&scenario, &quiet(4000, 11)).unwrap();
    let s = &r.summary;
    // window variance bound plus a small allowance for grid smearing
    assert!(s.post_variance.mean <= 1.0 / 12.0 + 0.005, "{}", s.post_variance.mean);
    assert!(s.reduction_factor > 50.0, "{}", s.reduction_factor);
}

#[test]
fn scattering_batches_give_uniform_width() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Scattering)).unwrap();
    let r = run_ensemble(&scenario, &quiet(4000, 12)).unwrap();
    let expected = (8.0f64 / 4.0).powi(2) / 12.0;
    let got = r.summary.post_variance.mean;
    assert!((got - expected).abs() / expected <= 0.2, "{got} vs {expected}");
}

#[test]
fn first_hit_times_match_quadrature() {
    for id in [CaseId::Case1, CaseId::Case2, CaseId::Case3] {
        let scenario = build(&ScenarioConfig::default_for(id)).unwrap();
        let r = run_ensemble(&scenario, &EnsembleOptions { ks_oracle: true, ..quiet(20_000, 21) }).unwrap();
        let ks = r.summary.ks.as_ref().unwrap();
        assert!(ks.passes(), "{id:?}: D = {} crit {}", ks.statistic, ks.critical_value);
        let oracle = r.summary.oracle_hit_fractions.as_ref().unwrap();
        let n: usize = r.summary.hits.iter().sum();
        for (f, p) in r.summary.hit_fractions.iter().zip(oracle) {
            assert!((f - p).abs() <= 3.0 * nrules::stats::binomial_sigma(*p, n), "{id:?}: {f} vs {p}");
        }
    }
}

#[test]
fn summary_ignores_execution_order() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Case3)).unwrap();
    let a = run_ensemble(&scenario, &quiet(1500, 5)).unwrap();
    let b = run_ensemble(&scenario, &EnsembleOptions { shuffle: Some(99), ..quiet(1500, 5) }).unwrap();
    assert_eq!(to_json_line(&a.summary).unwrap(), to_json_line(&b.summary).unwrap());
    assert_eq!(variance_csv(&a.variance), variance_csv(&b.variance));
}

#[test]
fn replay_and_full_engine_agree_on_summary() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Case2)).unwrap();
    let a = run_ensemble(&scenario, &quiet(300, 6)).unwrap();
    let b = run_ensemble(&scenario, &EnsembleOptions { replay: false, ..quiet(300, 6) }).unwrap();
    assert_eq!(to_json_line(&a.summary).unwrap(), to_json_line(&b.summary).unwrap());
}

#[test]
fn multi_generation_runs_relaunch() {
    let mut cfg = ScenarioConfig::default_for(CaseId::Scattering);
    cfg.generations = 3;
    let scenario = build(&cfg).unwrap();
    let r = run_ensemble(&scenario, &EnsembleOptions { checks: StepChecks { enabled: true }, ..quiet(40, 7) }).unwrap();
    assert!(r.failures.is_empty());
    assert!(r.records.iter().any(|rec| rec.events.len() > 1));
    for rec in &r.records {
        assert!(rec.events.len() <= 3);
        assert!(rec.events.windows(2).all(|w| w[1].t_sc > w[0].t_sc));
    }
}

#[test]
fn oracle_total_cdf_is_monotone_and_bounded() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Case1)).unwrap();
    let cdf = oracle_first_hit_cdf(&scenario).unwrap();
    let mut prev = 0.0;
    for k in 0..=100 {
        let t = cdf.t_end() * k as f64 / 100.0;
        let f = cdf.total_cdf(t);
        assert!(f >= prev && f < 1.0);
        prev = f;
    }
    let h = cdf.total_hazard(cdf.t_end());
    assert!((prev - (1.0 - (-h).exp())).abs() < 1e-15);
}

#[test]
fn oracle_total_cdf_ignores_refinement() {
    let base = ScenarioConfig::default_for(CaseId::Case3);
    let mut tables = Vec::new();
    for n in [1, 3, 6] {
        let mut cfg = base.clone();
        if let CaseSetup::Case3(c) = &mut cfg.setup {
            c.partition = PartitionSpec::Uniform(n);
        }
        cfg.t_max = 2.0;
        tables.push(oracle_first_hit_cdf_refined(&build(&cfg).unwrap(), 10).unwrap());
    }
    for t in [0.5, 1.0, 1.5, 2.0] {
        let f0 = tables[0].total_cdf(t);
        for tab in &tables[1..] {
            assert!((tab.total_cdf(t) - f0).abs() <= 1e-9 * f0);
        }
    }
}

const CASE3_TOML: &str = r#"
case = "case3"
t_max = 6.0
dt = 0.01

[object]
sigma = 1.0

[case3]
extent = [-3.0, 3.0]
batches = 3

[case3.kernel]
kind = "gaussian"
g = 0.5
lambda = 0.5

[case3.detector]
kind = "uniform"
"#;

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case3.toml");
    fs::write(&path, CASE3_TOML).unwrap();
    let cfg = parse_config(&path).unwrap();
    assert_eq!(cfg.case_id(), CaseId::Case3);
    assert_eq!(cfg.t_max, 6.0);
    build(&cfg).unwrap();

    assert!(matches!(parse_config(&dir.path().join("missing.toml")), Err(nrules::Error::Io(_))));

    fs::write(&path, CASE3_TOML.replace("lambda = 0.5", "lambda = 0.5\nlamda = 0.5")).unwrap();
    let Err(nrules::Error::Config(issues)) = parse_config(&path) else { panic!("typo accepted") };
    assert!(issues.iter().any(|i| i.key == "case3.kernel.lamda"));
}

#[test]
fn config_hash_ignores_key_order() {
    let a: toml::Table = toml::from_str("case = \"case1\"\ndt = 0.01\n[object]\nsigma = 1.0\nmass = 2.0\n").unwrap();
    let b: toml::Table = toml::from_str("dt = 0.01\n[object]\nmass = 2.0\nsigma = 1.0\n[x]\n").unwrap();
    let mut b = b;
    b.remove("x");
    b.insert("case".into(), toml::Value::String("case1".into()));
    assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    let c: toml::Table = toml::from_str("case = \"case1\"\ndt = 0.02\n[object]\nsigma = 1.0\nmass = 2.0\n").unwrap();
    assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
}

#[test]
fn results_directory_round_trip() {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Case1)).unwrap();
    let r = run_ensemble(&scenario, &EnsembleOptions { keep_series: 3, ..quiet(50, 8) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_results(dir.path(), &r).unwrap();
    assert!(files.contains(&"summary.jsonl".to_string()));
    assert_eq!(files.iter().filter(|f| f.starts_with("series/")).count(), 3);

    let series = fs::read_to_string(dir.path().join("series/000000.csv")).unwrap();
    assert!(series.starts_with("t,variance,s,H_1\n"));
    let row: Vec<&str> = series.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0.0000000000000000e0");

    let cfg_table: toml::Table = toml::from_str("case = \"case1\"").unwrap();
    let manifest = RunManifest {
        config_hash: config_hash(&cfg_table).unwrap(),
        engine_version: nrules::ENGINE_VERSION.into(),
        command: "run".into(),
        seed: 8,
        n_traj: 50,
        scenario: "case1".into(),
        grid: scenario.config.grid,
        dt: scenario.dt(),
        t_max: scenario.t_max(),
        config: canonical_config(&cfg_table).unwrap(),
        started_unix: 0,
        finished_unix: 0,
        files,
    };
    write_manifest(dir.path(), &manifest).unwrap();
    assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
    let table = read_variance_table(dir.path()).unwrap();
    assert_eq!(variance_csv(&table), variance_csv(&r.variance));
    assert_eq!(table.grid, r.variance.grid);

    let summary = fs::read_to_string(dir.path().join("summary.jsonl")).unwrap();
    let value: serde_json::Value = serde_json::from_str(summary.trim()).unwrap();
    let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
    assert_eq!(keys[0], "scenario");
    assert_eq!(keys[1], "n_traj");
}

#[test]
fn floats_keep_seventeen_digits() {
    for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, -7.25e12] {
        let s = format_float(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
    }
    assert_eq!(format_float(f64::NAN), "nan");
}
