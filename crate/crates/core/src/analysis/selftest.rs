//! Quick oracle suite used by the `selftest` command.

use serde::Serialize;

use super::ensemble::{run_ensemble, EnsembleOptions};
use super::oracle::oracle_first_hit_cdf_refined;
use super::constant_rate_first_hit;
use crate::component::{mark_ready, Component, ComponentId, ComponentKind, Labels, UniverseState};
use crate::decoherence::PartitionSpec;
use crate::error::Result;
use crate::reduction::{
    assert_freeze, run_step, FreezeBaseline, FreezeViolation, RngStream, StepChecks,
};
use crate::scenario::{build, CaseId, CaseSetup, ScenarioConfig};
use crate::stats::{binomial_sigma, KsResult};
use crate::wave::{
    channel_currents, drain_with_currents, position_variance, CaptureChannel, CurrentLedger, Grid1D,
    GridWavefunction, Propagator,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from(name: &'static str, result: Result<(bool, String)>) -> Self {
        match result {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

/// Run every check; none are skipped when one fails.
pub fn run_all() -> Vec<Check> {
    vec![
        Check::from("spreading", spreading()),
        Check::from("trigger_law", trigger_law()),
        Check::from("collapse_law", collapse_law()),
        Check::from("freeze_fixtures", freeze_fixtures()),
        Check::from("refinement", refinement()),
        Check::from("determinism", determinism()),
    ]
}

fn spreading() -> Result<(bool, String)> {
    let mut cfg = ScenarioConfig::default_for(CaseId::Baseline);
    cfg.t_max = 4.0;
    let scenario = build(&cfg)?;
    let mut psi = scenario.initial.clone();
    let mut prop = Propagator::new(&scenario.hamiltonian, cfg.dt)?;
    let mut worst = 0.0f64;
    for k in 1..=scenario.n_steps() {
        prop.step(&mut psi)?;
        let t = k as f64 * cfg.dt;
        let exact = 1.0 + t * t / 4.0;
        worst = worst.max((position_variance(&psi)? - exact).abs() / exact);
    }
    Ok((worst < 0.01, format!("max relative error {worst:.3e}")))
}

fn trigger_law() -> Result<(bool, String)> {
    let (r1, r2, dt, n) = (0.3, 0.2, 0.01, 20_000u64);
    let r = r1 + r2;
    let mut times = Vec::with_capacity(n as usize);
    let mut first = 0usize;
    for stream in 0..n {
        let mut rng = RngStream::new(7, stream);
        if let Some((channel, t)) = constant_rate_first_hit(&[r1, r2], dt, usize::MAX, &mut rng)? {
            times.push(t);
            first += usize::from(channel == 0);
        }
    }
    let ks = KsResult::new(&times, |t| -(-r * t).exp_m1(), 0.01);
    let frac = first as f64 / times.len() as f64;
    let sigma = binomial_sigma(r1 / r, times.len());
    let ok = ks.passes() && (frac - r1 / r).abs() <= 3.0 * sigma;
    Ok((ok, format!("KS {:.4} < {:.4}; fraction {frac:.4} vs {:.4}", ks.statistic, ks.critical_value, r1 / r)))
}

fn collapse_law() -> Result<(bool, String)> {
    let mut cfg = ScenarioConfig::default_for(CaseId::Case1);
    cfg.t_max = 3.0;
    let scenario = build(&cfg)?;
    let window = (1.0, 2.0);
    let mut collapses = 0;
    let mut violations = Vec::new();
    for stream in 0..40 {
        let (mut state, channels) = scenario.initial_state()?;
        let mut ledger = CurrentLedger::new(&channels, state.s);
        let mut prop = Propagator::new(&scenario.hamiltonian, cfg.dt)?;
        let mut rng = RngStream::new(5, stream);
        for _ in 0..scenario.n_steps() {
            let out = run_step(&mut state, &mut ledger, &channels, &mut prop, &mut rng, StepChecks { enabled: true })?;
            if out.event.is_some() {
                collapses += 1;
                let c = &state.components;
                if c.len() != 1 || c[0].kind != ComponentKind::Realized || (c[0].norm_sqr() - 1.0).abs() > 1e-10 {
                    violations.push(format!("stream {stream}: bad component set"));
                }
                let peak = c[0].psi.density().fold(0.0, f64::max);
                let outside = c[0]
                    .psi
                    .density()
                    .zip(c[0].psi.grid().points())
                    .any(|(p, x)| p > 1e-12 * peak && !(x >= window.0 && x < window.1));
                if outside {
                    violations.push(format!("stream {stream}: support outside window"));
                }
                break;
            }
        }
    }
    Ok((violations.is_empty() && collapses > 0, format!("{collapses} collapses, violations {violations:?}")))
}

fn freeze_fixtures() -> Result<(bool, String)> {
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

    let mut bad_channels = channels.clone();
    bad_channels.push(channels[0].retarget(ComponentId(1), ComponentId(2)));
    let first = assert_freeze(&state, &bad_channels, None)
        .violations
        .iter()
        .any(|v| matches!(v, FreezeViolation::ReadySourcedChannel { .. }));

    let baseline = FreezeBaseline::capture(&state);
    let mut evolved = state.clone();
    let mut prop = Propagator::new(&crate::wave::Hamiltonian1D::free(grid, 1.0, Default::default())?, 0.01)?;
    prop.step(&mut evolved.components[1].psi)?;
    let second = assert_freeze(&evolved, &channels, Some(&baseline))
        .violations
        .iter()
        .any(|v| matches!(v, FreezeViolation::SelfEvolution { .. }));
    Ok((clean && first && second, format!("clean {clean}, ready-sourced {first}, self-evolution {second}")))
}

fn refinement() -> Result<(bool, String)> {
    let mut totals = Vec::new();
    for n in [1, 3, 6] {
        let mut cfg = ScenarioConfig::default_for(CaseId::Case3);
        cfg.t_max = 1.0;
        if let CaseSetup::Case3(c) = &mut cfg.setup {
            c.partition = PartitionSpec::Uniform(n);
        }
        let table = oracle_first_hit_cdf_refined(&build(&cfg)?, 10)?;
        totals.push(table.t.iter().map(|&t| table.total_cdf(t)).collect::<Vec<_>>());
    }
    let mut worst = 0.0f64;
    for other in &totals[1..] {
        for (a, b) in totals[0].iter().zip(other) {
            if *a > 0.0 {
                worst = worst.max((a - b).abs() / a);
            }
        }
    }
    Ok((worst <= 1e-9, format!("max relative difference {worst:.3e}")))
}

fn determinism() -> Result<(bool, String)> {
    let mut cfg = ScenarioConfig::default_for(CaseId::Case2);
    cfg.t_max = 2.0;
    let scenario = build(&cfg)?;
    let opts = EnsembleOptions { n_traj: 600, seed: 9, ..Default::default() };
    let a = run_ensemble(&scenario, &opts)?;
    let b = run_ensemble(&scenario, &EnsembleOptions { shuffle: Some(1), ..opts })?;
    let same = serde_json::to_string(&a.summary).ok() == serde_json::to_string(&b.summary).ok()
        && a.records == b.records;
    Ok((same, format!("summaries identical across execution orders: {same}")))
}
