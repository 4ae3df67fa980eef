//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::cell::OnceCell;
use std::collections::HashMap;
use std::time::Instant;

use statrs::function::erf::erf;

use nrules::analysis::*;
use nrules::component::{mark_ready, Component, ComponentId, ComponentKind, Labels, UniverseState};
use nrules::decoherence::{CaptureKernel, ConfigurationDensity, PartitionSpec};
use nrules::io::{to_json_line, write_results};
use nrules::reduction::{assert_freeze, run_step, FreezeBaseline, FreezeViolation, RngStream, StepChecks};
use nrules::scenario::*;
use nrules::stats::{binomial_sigma, KsResult};
use nrules::wave::{
    channel_currents, drain_with_currents, CaptureChannel, CurrentLedger, Grid1D, GridWavefunction,
    Hamiltonian1D, Propagator,
};
use nrules::Result;

const N_TRAJ: usize = 20_000;
const SEED: u64 = 42;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn quiet(n_traj: usize, seed: u64) -> EnsembleOptions {
    EnsembleOptions { n_traj, seed, checks: StepChecks { enabled: false }, keep_series: 0, ..Default::default() }
}

fn c1_spreading() -> Result<Outcome> {
    let mut cfg = ScenarioConfig::default_for(CaseId::Baseline);
    cfg.t_max = 4.0;
    let scenario = build(&cfg)?;
    let path = PrecollapsePath::compute(&scenario, StepChecks { enabled: false })?;
    let worst = path
        .steps
        .iter()
        .map(|s| {
            let exact = 1.0 + s.t * s.t / 4.0;
            (s.variance - exact).abs() / exact
        })
        .fold(0.0f64, f64::max);
    outcome(worst <= 0.01, format!("max |Var - (1 + t²/4)| / Var = {worst:.3e} (tol 1e-2, t ≤ 4)"))
}

fn c2_trigger_law() -> Result<Outcome> {
    let dt = 0.01;
    let r = 0.5;
    let mut single = Vec::with_capacity(N_TRAJ);
    for stream in 0..N_TRAJ as u64 {
        let mut rng = RngStream::new(SEED, stream);
        if let Some((_, t)) = constant_rate_first_hit(&[r], dt, usize::MAX, &mut rng)? {
            single.push(t);
        }
    }
    let ks = KsResult::new(&single, |t| -(-r * t).exp_m1(), 0.01);

    let (r1, r2) = (0.3, 0.2);
    let mut first = 0usize;
    let mut hits = 0usize;
    for stream in 0..N_TRAJ as u64 {
        let mut rng = RngStream::new(SEED + 1, stream);
        if let Some((channel, _)) = constant_rate_first_hit(&[r1, r2], dt, usize::MAX, &mut rng)? {
            hits += 1;
            first += usize::from(channel == 0);
        }
    }
    let p = r1 / (r1 + r2);
    let frac = first as f64 / hits as f64;
    let sigma = binomial_sigma(p, hits);

    // the engine's first-hit law against the quadrature oracle
    let case1 = build(&ScenarioConfig::default_for(CaseId::Case1))?;
    let engine = run_ensemble(&case1, &EnsembleOptions { ks_oracle: true, ..quiet(N_TRAJ, SEED) })?;
    let eks = engine.summary.ks.expect("requested");

    let passed = ks.passes() && (frac - p).abs() <= 3.0 * sigma && eks.passes();
    outcome(
        passed,
        format!(
            "KS D = {:.4} (1% crit {:.4}, p = {:.3}); fraction {frac:.4} vs {p:.4} (3σ = {:.4}); engine Case1 KS D = {:.4} (crit {:.4})",
            ks.statistic,
            ks.critical_value,
            ks.p_value,
            3.0 * sigma,
            eks.statistic,
            eks.critical_value
        ),
    )
}

#[derive(Default)]
struct SuiteTally {
    steps: usize,
    collapses: usize,
    collapse_violations: Vec<String>,
    freeze_violations: Vec<String>,
}

fn run_suite_trajectory(scenario: &Scenario, stream: u64, tally: &mut SuiteTally) -> Result<()> {
    let checks = StepChecks { enabled: true };
    let (mut state, mut channels) = scenario.initial_state()?;
    let mut ledger = CurrentLedger::new(&channels, state.s);
    let mut prop = Propagator::new(&scenario.hamiltonian, scenario.dt())?;
    let mut rng = RngStream::new(SEED, stream);
    let mut events = 0;
    let case1_window = match &scenario.config.setup {
        CaseSetup::Case1(c) => Some(c.windows.clone()),
        _ => None,
    };
    for _ in 0..scenario.n_steps() {
        let out = match run_step(&mut state, &mut ledger, &channels, &mut prop, &mut rng, checks) {
            Ok(out) => out,
            Err(nrules::Error::InvariantViolation(msg)) if msg.starts_with("freeze") => {
                tally.freeze_violations.push(format!("{} stream {stream}: {msg}", scenario.id()));
                return Ok(());
            }
            Err(nrules::Error::InvariantViolation(msg)) => {
                tally.collapse_violations.push(format!("{} stream {stream}: {msg}", scenario.id()));
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        tally.steps += 1;
        let report = assert_freeze(&state, &channels, None);
        if !report.is_empty() {
            tally.freeze_violations.push(format!("{} stream {stream}: {:?}", scenario.id(), report.violations));
        }
        let Some(event) = out.event else { continue };
        tally.collapses += 1;
        events += 1;
        let c = &state.components;
        if c.len() != 1 || c[0].kind != ComponentKind::Realized || (c[0].norm_sqr() - 1.0).abs() > 1e-10 {
            tally.collapse_violations.push(format!("{} stream {stream}: component set after collapse", scenario.id()));
        }
        if let Some(windows) = &case1_window {
            let (lo, hi) = windows[event.channel];
            let peak = c[0].psi.density().fold(0.0, f64::max);
            let outside = c[0]
                .psi
                .density()
                .zip(c[0].psi.grid().points())
                .any(|(p, x)| p > 1e-12 * peak && !(x >= lo && x < hi));
            if outside {
                tally.collapse_violations.push(format!("{} stream {stream}: support outside [{lo}, {hi})", scenario.id()));
            }
        }
        if events >= scenario.config.generations {
            break;
        }
        channels = scenario.arm(&mut state)?;
        ledger = CurrentLedger::new(&channels, state.s);
    }
    Ok(())
}

fn suite() -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for id in [CaseId::Baseline, CaseId::Case1, CaseId::Case2, CaseId::Case3, CaseId::Scattering] {
        out.push(build(&ScenarioConfig::default_for(id))?);
    }
    for id in [CaseId::Case2, CaseId::Case3, CaseId::Scattering] {
        let mut cfg = ScenarioConfig::default_for(id);
        cfg.generations = 3;
        out.push(build(&cfg)?);
    }
    // a Case I setup where nearly every trajectory collapses
    let mut cfg = ScenarioConfig::default_for(CaseId::Case1);
    cfg.setup = CaseSetup::Case1(Case1Config { windows: vec![(-1.0, 0.0), (0.0, 1.0)], rate: 5.0 });
    out.push(build(&cfg)?);
    Ok(out)
}

fn suite_tally() -> Result<SuiteTally> {
    let mut tally = SuiteTally::default();
    for scenario in suite()? {
        for stream in 0..60 {
            run_suite_trajectory(&scenario, stream, &mut tally)?;
        }
    }
    Ok(tally)
}

fn c3_collapse_law(tally: &SuiteTally) -> Result<Outcome> {
    outcome(
        tally.collapses > 0 && tally.collapse_violations.is_empty(),
        format!("{} collapses checked, {} violations {:?} (tol 0)", tally.collapses, tally.collapse_violations.len(), tally.collapse_violations),
    )
}

/// The two deliberate violations: a channel sourced from a ready component,
/// and a ready component evolved by the Hamiltonian.
fn freeze_fixtures() -> Result<(bool, bool, bool)> {
    let grid = Grid1D::new(-10.0, 10.0, 501)?;
    let psi = GridWavefunction::gaussian(grid, 0.0, 2.0, 0.0)?;
    let mut state = UniverseState::new(Component::realized(ComponentId(0), psi, 0.0), 0.0);
    let mut channels = Vec::new();
    for (n, (lo, hi)) in [(1.0, 2.0), (2.0, 3.0)].into_iter().enumerate() {
        let id = ComponentId(n as u64 + 1);
        state.push(Component::candidate(id, Labels::crystal(n), GridWavefunction::zeros(grid), 0.0))?;
        state = mark_ready(state, id)?;
        let gamma = grid.points().map(|x| if x >= lo && x < hi { 0.5 } else { 0.0 }).collect();
        channels.push(CaptureChannel::new(ComponentId(0), id, grid, gamma, format!("w{n}"))?);
    }
    let currents = channel_currents(&channels, &state)?;
    drain_with_currents(&mut state, &channels, &currents, 0.01)?;
    let clean = assert_freeze(&state, &channels, Some(&FreezeBaseline::capture(&state))).is_empty();

    let mut bad = channels.clone();
    bad.push(channels[0].retarget(ComponentId(1), ComponentId(2)));
    let sourced = assert_freeze(&state, &bad, None)
        .violations
        .iter()
        .any(|v| matches!(v, FreezeViolation::ReadySourcedChannel { .. }));

    let baseline = FreezeBaseline::capture(&state);
    let mut evolved = state.clone();
    let mut prop = Propagator::new(&Hamiltonian1D::free(grid, 1.0, Default::default())?, 0.01)?;
    prop.step(&mut evolved.components[1].psi)?;
    let evolving = assert_freeze(&evolved, &channels, Some(&baseline))
        .violations
        .iter()
        .any(|v| matches!(v, FreezeViolation::SelfEvolution { .. }));
    Ok((clean, sourced, evolving))
}

fn c4_freeze_law(tally: &SuiteTally) -> Result<Outcome> {
    let (clean, sourced, evolving) = freeze_fixtures()?;
    outcome(
        tally.freeze_violations.is_empty() && clean && sourced && evolving,
        format!(
            "{} engine steps checked, {} violations (tol 0); fixtures detected: ready-sourced {sourced}, self-evolution {evolving}; clean fixture {clean}",
            tally.steps,
            tally.freeze_violations.len()
        ),
    )
}

/// Variance of `Γ(x) ρ(x)` for a Gaussian density, on a fine grid that is
/// independent of the engine grid.
fn truncated_variance(gamma: impl Fn(f64) -> f64, mean: f64, var: f64) -> f64 {
    let (lo, hi, n) = (-20.0, 20.0, 40_001);
    let h = (hi - lo) / (n - 1) as f64;
    let (mut w0, mut w1, mut w2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let x = lo + i as f64 * h;
        let w = gamma(x) * (-(x - mean) * (x - mean) / (2.0 * var)).exp();
        w0 += w;
        w1 += w * x;
        w2 += w * x * x;
    }
    let m = w1 / w0;
    w2 / w0 - m * m
}

/// `g ∫_a^b exp(-(x-u)²/2λ²) w(u) du` for a peak-one Gaussian `w`.
fn case3_gamma(x: f64, (a, b): (f64, f64), g: f64, lambda: f64, (c, s): (f64, f64)) -> f64 {
    let v = lambda * lambda + s * s;
    let tau = lambda * s / v.sqrt();
    let m = (x * s * s + c * lambda * lambda) / v;
    let r = tau * std::f64::consts::SQRT_2;
    g * (-(x - c) * (x - c) / (2.0 * v)).exp() * tau * (std::f64::consts::PI / 2.0).sqrt() * (erf((b - m) / r) - erf((a - m) / r))
}

fn uniform_intervals((lo, hi): (f64, f64), n: usize) -> Vec<(f64, f64)> {
    let w = (hi - lo) / n as f64;
    (0..n).map(|a| (lo + a as f64 * w, lo + (a + 1) as f64 * w)).collect()
}

fn c5_localization() -> Result<Outcome> {
    let mut passed = true;
    let mut parts = Vec::new();
    for id in [CaseId::Case1, CaseId::Case3, CaseId::Scattering] {
        let cfg = ScenarioConfig::default_for(id);
        let scenario = build(&cfg)?;
        let r = run_ensemble(&scenario, &quiet(N_TRAJ, SEED))?;
        let o = cfg.object;
        let gamma: Box<dyn Fn(usize, f64) -> f64> = match &cfg.setup {
            CaseSetup::Case1(c) => {
                let w = c.windows.clone();
                Box::new(move |a, x| if x >= w[a].0 && x < w[a].1 { 1.0 } else { 0.0 })
            }
            CaseSetup::Case3(c) => {
                let PartitionSpec::Uniform(n) = c.partition else { unreachable!() };
                let CaptureKernel::Gaussian { g, lambda } = c.kernel else { unreachable!() };
                let ConfigurationDensity::Gaussian { center, sigma } = c.detector else { unreachable!() };
                let iv = uniform_intervals(c.extent, n);
                Box::new(move |a, x| case3_gamma(x, iv[a], g, lambda, (center, sigma)))
            }
            CaseSetup::Scattering(c) => {
                let PartitionSpec::Uniform(n) = c.partition else { unreachable!() };
                let iv = uniform_intervals(c.extent, n);
                Box::new(move |a, x| if x >= iv[a].0 && x <= iv[a].1 { 1.0 } else { 0.0 })
            }
            _ => unreachable!(),
        };
        let mut cache: HashMap<(usize, u64), f64> = HashMap::new();
        let mut predicted = 0.0;
        let mut n = 0usize;
        for e in r.records.iter().filter_map(|rec| rec.first_event()) {
            let t = e.t_state;
            let oracle = *cache.entry((e.channel, t.to_bits())).or_insert_with(|| {
                let mean = o.center + o.momentum * t / o.mass;
                let var = o.sigma * o.sigma + (t / (2.0 * o.mass * o.sigma)).powi(2);
                truncated_variance(|x| gamma(e.channel, x), mean, var)
            });
            predicted += oracle;
            n += 1;
        }
        predicted /= n as f64;
        let observed = r.summary.post_variance.mean;
        let factor = r.summary.baseline_variance / observed;
        let rel = (observed - predicted).abs() / predicted;
        let ok = factor >= 5.0 && rel <= 0.2;
        passed &= ok;
        parts.push(format!(
            "{}: factor {factor:.1} (≥ 5), post {observed:.4} vs oracle {predicted:.4} (rel {rel:.3}, tol 0.2) over {n} collapses",
            scenario.id()
        ));
    }
    outcome(passed, parts.join("; "))
}

fn c6_refinement() -> Result<Outcome> {
    let mut tables = Vec::new();
    for n in [1, 3, 6] {
        let mut cfg = ScenarioConfig::default_for(CaseId::Case3);
        if let CaseSetup::Case3(c) = &mut cfg.setup {
            c.partition = PartitionSpec::Uniform(n);
        }
        tables.push(oracle_first_hit_cdf(&build(&cfg)?)?);
    }
    let mut worst = 0.0f64;
    for (j, &t) in tables[0].t.iter().enumerate() {
        let f0 = tables[0].total_cdf(t);
        if f0 > 0.0 {
            for tab in &tables[1..] {
                assert_eq!(tab.t[j], t);
                worst = worst.max((tab.total_cdf(t) - f0).abs() / f0);
            }
        }
    }
    outcome(worst <= 1e-9, format!("max relative total-CDF difference over n = 1, 3, 6: {worst:.3e} (tol 1e-9)"))
}

fn median_t_sc(cfg: &ScenarioConfig) -> Result<(f64, usize)> {
    let r = run_ensemble(&build(cfg)?, &quiet(N_TRAJ, SEED))?;
    Ok((r.summary.t_sc_p50, r.summary.hits.iter().sum()))
}

fn scaled(cfg: &ScenarioConfig, factor: f64) -> ScenarioConfig {
    let mut fast = cfg.clone();
    fast.scale_rates(factor);
    fast.dt /= factor;
    fast.t_max /= factor;
    fast
}

fn c7_many_photons() -> Result<Outcome> {
    let cfg = ScenarioConfig::default_for(CaseId::Case3);
    let (slow_med, slow_hits) = median_t_sc(&cfg)?;
    let (fast_med, fast_hits) = median_t_sc(&scaled(&cfg, 100.0))?;
    let ratio = 100.0 * fast_med / slow_med;

    // control: coupling independent of position, so the packet's motion
    // cannot change the hazard
    let mut flat = cfg.clone();
    flat.setup = CaseSetup::Case3(Case3Config {
        extent: (-3.0, 3.0),
        partition: PartitionSpec::Uniform(3),
        kernel: CaptureKernel::Window { g: 0.125, half_width: 100.0 },
        detector: ConfigurationDensity::Uniform,
    });
    let (flat_slow, _) = median_t_sc(&flat)?;
    let (flat_fast, _) = median_t_sc(&scaled(&flat, 100.0))?;
    outcome(
        (ratio - 1.0).abs() <= 0.1,
        format!(
            "default Case3: median t_sc {slow_med:.4} -> {fast_med:.6}, ratio × 100 = {ratio:.4} (tol 1 ± 0.1), hits {slow_hits} / {fast_hits}; \
             flat-coupling control ratio × 100 = {:.4}",
            100.0 * flat_fast / flat_slow
        ),
    )
}

fn c8_determinism() -> Result<Outcome> {
    let scenario = build(&ScenarioConfig::default_for(CaseId::Case3))?;
    let opts = EnsembleOptions { keep_series: 5, ..quiet(N_TRAJ, SEED) };
    let a = run_ensemble(&scenario, &opts)?;
    let b = run_ensemble(&scenario, &opts)?;
    let c = run_ensemble(&scenario, &EnsembleOptions { shuffle: Some(7), ..opts })?;
    let da = tempfile::tempdir()?;
    let db = tempfile::tempdir()?;
    write_results(da.path(), &a)?;
    write_results(db.path(), &b)?;
    let mut same_files = true;
    for name in ["summary.jsonl", "variance.csv", "events.csv", "series/000004.csv"] {
        same_files &= std::fs::read(da.path().join(name))? == std::fs::read(db.path().join(name))?;
    }
    let same_order = to_json_line(&a.summary)? == to_json_line(&c.summary)?;
    outcome(
        same_files && same_order,
        format!("rerun byte-identical: {same_files}; summary identical under shuffled execution: {same_order}"),
    )
}

fn c9_convergence() -> Result<Outcome> {
    let mut h = Vec::new();
    for k in 0..3 {
        let mut cfg = ScenarioConfig::default_for(CaseId::Case1);
        cfg.dt /= f64::from(1u32 << k);
        let path = PrecollapsePath::compute(&build(&cfg)?, StepChecks { enabled: false })?;
        h.push(path.steps.last().expect("steps").hazards[0]);
    }
    let order = ((h[0] - h[1]).abs() / (h[1] - h[2]).abs()).log2();
    outcome(
        (0.8..=1.2).contains(&order),
        format!("H(t_max) at dt, dt/2, dt/4 = {:.10}, {:.10}, {:.10}; order {order:.4} (tol [0.8, 1.2])", h[0], h[1], h[2]),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Result<Outcome> + 'a>);

fn main() {
    let tally: OnceCell<std::result::Result<SuiteTally, String>> = OnceCell::new();
    let suite = || tally.get_or_init(|| suite_tally().map_err(|e| e.to_string())).as_ref().map_err(|e| nrules::Error::Numerical(e.clone()));
    let criteria: Vec<Criterion<'_>> = vec![
        ("spreading baseline", Box::new(c1_spreading)),
        ("trigger law", Box::new(c2_trigger_law)),
        ("collapse law", Box::new(|| suite().and_then(c3_collapse_law))),
        ("freeze law", Box::new(|| suite().and_then(c4_freeze_law))),
        ("localization", Box::new(c5_localization)),
        ("refinement consistency", Box::new(c6_refinement)),
        ("many-photon limit", Box::new(c7_many_photons)),
        ("determinism", Box::new(c8_determinism)),
        ("convergence", Box::new(c9_convergence)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "criterion {} {name}: {} [{:.1}s] {detail}",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
