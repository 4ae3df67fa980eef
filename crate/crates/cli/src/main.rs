use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nrules::analysis::{localization_report, run_ensemble, selftest, EnsembleOptions, EnsembleResult};
use nrules::io::{
    canonical_config, config_hash, parse_config_table, parse_value, read_manifest, read_variance_table, results_dir,
    set_key, to_json_line, unix_now, write_manifest, write_results, RunManifest,
};
use nrules::reduction::StepChecks;
use nrules::scenario::{build, CaseSetup, ScenarioConfig};

#[derive(Parser)]
#[command(name = "nrules", version, about = "Monte Carlo runs of the collapse rules on 1D scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble from a config file (or replay a manifest)
    Run(RunArgs),
    /// Same as run, with every capture channel removed
    Baseline(RunArgs),
    /// Run one ensemble per value of a config parameter
    Sweep(SweepArgs),
    /// Compare an ensemble with a baseline run
    Report(ReportArgs),
    /// Run the built-in oracle checks
    Selftest,
}

#[derive(Args, Clone)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["config", "manifest"]))]
struct RunArgs {
    /// Scenario config (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay the run recorded in this manifest (file or results directory)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    traj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Results directory; relative paths resolve against $NRULES_RESULTS_ROOT
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of trajectories whose full series is written
    #[arg(long, default_value_t = 100)]
    series: usize,
    /// KS test of first-hit times against the quadrature oracle
    #[arg(long)]
    ks: bool,
    /// Check freeze and collapse invariants on every step
    #[arg(long)]
    checks: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dotted key path, e.g. case1.rate
    #[arg(long)]
    param: String,
    /// Comma-separated values
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    traj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    series: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
}

enum Fail {
    Usage(String),
    Config(String),
    Numerical(String),
    Acceptance(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 1,
            Fail::Config(_) => 2,
            Fail::Numerical(_) => 3,
            Fail::Acceptance(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Fail::Usage(m) | Fail::Config(m) | Fail::Numerical(m) | Fail::Acceptance(m) => m,
        }
    }
}

impl From<nrules::Error> for Fail {
    fn from(e: nrules::Error) -> Self {
        match e {
            nrules::Error::Config(_) => Fail::Config(e.to_string()),
            e if e.is_numerical() => Fail::Numerical(e.to_string()),
            e => Fail::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Usage(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args, false),
        Command::Baseline(args) => run(args, true),
        Command::Sweep(args) => sweep(args),
        Command::Report(args) => report(args),
        Command::Selftest => run_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(fail) => {
            eprintln!("error: {}", fail.message());
            ExitCode::from(fail.code())
        }
    }
}

fn load_table(path: &Path) -> Result<toml::Table, Fail> {
    let text = fs::read_to_string(path).map_err(|e| Fail::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Fail::Config(format!("{}: {e}", path.display())))
}

fn scenario_config(table: &toml::Table, baseline: bool) -> Result<ScenarioConfig, Fail> {
    let mut cfg = parse_config_table(table)?;
    if baseline {
        cfg.setup = CaseSetup::Baseline;
    }
    Ok(cfg)
}

/// Canonical command line stored in the manifest; replay parses it back.
fn command_line(name: &str, args: &RunArgs) -> String {
    let mut s = format!("{name} --traj {} --seed {} --series {}", args.traj, args.seed, args.series);
    if args.ks {
        s.push_str(" --ks");
    }
    if args.checks {
        s.push_str(" --checks");
    }
    s
}

struct Resolved {
    table: toml::Table,
    baseline: bool,
    args: RunArgs,
}

fn resolve(args: RunArgs, baseline: bool) -> Result<Resolved, Fail> {
    let Some(path) = &args.manifest else {
        let table = load_table(args.config.as_ref().expect("clap requires a source"))?;
        return Ok(Resolved { table, baseline, args });
    };
    let dir = if path.is_dir() { path.clone() } else { path.parent().map(Path::to_path_buf).unwrap_or_default() };
    let manifest = read_manifest(&dir)?;
    let table: toml::Table = serde_json::from_str(&manifest.config)
        .map_err(|e| Fail::Config(format!("{}: manifest config: {e}", dir.display())))?;
    let words: Vec<&str> = manifest.command.split_whitespace().collect();
    let recorded = match Cli::try_parse_from(std::iter::once("nrules").chain(words.iter().copied()).chain(["--config", "-"])) {
        Ok(Cli { command: Command::Run(a) }) => (a, false),
        Ok(Cli { command: Command::Baseline(a) }) => (a, true),
        _ => return Err(Fail::Usage(format!("manifest command '{}' is not replayable", manifest.command))),
    };
    let (recorded, was_baseline) = recorded;
    Ok(Resolved {
        table,
        baseline: baseline || was_baseline,
        args: RunArgs { config: None, manifest: None, out: args.out, ..recorded },
    })
}

fn run_one(
    table: &toml::Table,
    cfg: &ScenarioConfig,
    args: &RunArgs,
    command: String,
    out: &Path,
) -> Result<EnsembleResult, Fail> {
    let started = unix_now();
    let scenario = build(cfg)?;
    let opts = EnsembleOptions {
        n_traj: args.traj,
        seed: args.seed,
        checks: StepChecks { enabled: args.checks },
        keep_series: args.series,
        ks_oracle: args.ks,
        ..Default::default()
    };
    let result = run_ensemble(&scenario, &opts)?;
    let mut files = write_results(out, &result)?;
    files.insert(0, "manifest".into());
    let manifest = RunManifest {
        config_hash: config_hash(table)?,
        engine_version: nrules::ENGINE_VERSION.into(),
        command,
        seed: args.seed,
        n_traj: args.traj,
        scenario: scenario.id().into(),
        grid: cfg.grid,
        dt: cfg.dt,
        t_max: cfg.t_max,
        config: canonical_config(table)?,
        started_unix: started,
        finished_unix: unix_now(),
        files,
    };
    write_manifest(out, &manifest)?;
    Ok(result)
}

fn check_failures(result: &EnsembleResult, out: &Path) -> Result<(), Fail> {
    let numerical = result.failures.iter().filter(|f| f.numerical).count();
    if result.failures.is_empty() {
        Ok(())
    } else if numerical > 0 {
        Err(Fail::Numerical(format!(
            "{numerical} of {} trajectories failed numerically; see {}",
            result.summary.n_traj,
            out.join("failures.jsonl").display()
        )))
    } else {
        Err(Fail::Usage(format!("{} trajectories failed; see {}", result.failures.len(), out.join("failures.jsonl").display())))
    }
}

fn run(args: RunArgs, baseline: bool) -> Result<(), Fail> {
    let Resolved { table, baseline, args } = resolve(args, baseline)?;
    let cfg = scenario_config(&table, baseline)?;
    let name = if baseline { "baseline" } else { "run" };
    let case = if baseline { "baseline" } else { cfg.case_id().as_str() };
    let out = results_dir(&args.out.clone().unwrap_or_else(|| PathBuf::from(format!("{case}-seed{}", args.seed))));
    let result = run_one(&table, &cfg, &args, command_line(name, &args), &out)?;
    emit(&(to_json_line(&result.summary)? + "\n"))?;
    eprintln!("results in {}", out.display());
    check_failures(&result, &out)
}

fn sweep(args: SweepArgs) -> Result<(), Fail> {
    let base = load_table(&args.config)?;
    let root = results_dir(&args.out.clone().unwrap_or_else(|| PathBuf::from(format!("sweep-{}", args.param))));
    // validate every point before running any
    let mut points = Vec::new();
    for text in &args.values {
        let mut table = base.clone();
        set_key(&mut table, &args.param, parse_value(text))?;
        let cfg = scenario_config(&table, false)?;
        points.push((text, table, cfg));
    }
    let run_args = RunArgs {
        config: Some(args.config.clone()),
        manifest: None,
        traj: args.traj,
        seed: args.seed,
        out: None,
        series: args.series,
        ks: false,
        checks: false,
    };
    let mut lines = String::new();
    let mut failures = Vec::new();
    for (i, (text, table, cfg)) in points.into_iter().enumerate() {
        let out = root.join(format!("{i:03}"));
        let result = run_one(&table, &cfg, &run_args, command_line("run", &run_args), &out)?;
        let line = serde_json::json!({ "param": args.param, "value": text, "dir": format!("{i:03}"), "summary": result.summary });
        let line = to_json_line(&line)?;
        lines.push_str(&line);
        lines.push('\n');
        emit(&format!("{line}\n"))?;
        if let Err(f) = check_failures(&result, &out) {
            failures.push(f);
        }
    }
    fs::write(root.join("sweep.jsonl"), lines)?;
    eprintln!("results in {}", root.display());
    match failures.into_iter().next() {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn report(args: ReportArgs) -> Result<(), Fail> {
    let ensemble = read_variance_table(&results_dir(&args.ensemble))?;
    let baseline = read_variance_table(&results_dir(&args.baseline))?;
    let report = localization_report(&ensemble, &baseline)?;
    let mut text = format!(
        "# ensemble {} vs baseline {}\n# reduction factor at t_max: {}\n# reduction factor of collapsed trajectories at t_max: {}\n",
        report.ensemble,
        report.baseline,
        fixed(report.reduction_factor, 6),
        fixed(report.post_collapse_reduction_factor, 6)
    );
    text.push_str("t,baseline_variance,ensemble_variance,collapsed_fraction,mean_post_variance,factor\n");
    for r in &report.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fixed(r.t, 6),
            fixed(r.baseline_variance, 8),
            fixed(r.ensemble_variance, 8),
            fixed(r.collapsed_fraction, 6),
            fixed(r.mean_post_variance, 8),
            fixed(r.factor, 6)
        ));
    }
    emit(&text)
}

fn fixed(x: f64, digits: usize) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.digits$}")
    }
}

/// Write to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<(), Fail> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run_selftest() -> Result<(), Fail> {
    let checks = selftest::run_all();
    for c in &checks {
        emit(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))?;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Fail::Acceptance(format!("selftest failed: {}", failed.join(", "))))
    }
}
