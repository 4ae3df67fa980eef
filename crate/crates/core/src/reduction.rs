//! Stochastic trigger, collapse, and the freeze constraint on ready
//! components, composed into the per-step engine loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::component::{ComponentId, ComponentKind, Labels, UniverseState};
use crate::error::{Error, Result};
use crate::wave::{
    channel_currents, drain_with_currents, position_variance, CaptureChannel, CurrentLedger,
    Propagator, STEP_HAZARD_LIMIT,
};

/// Tolerance on the density difference a ready component may show beyond
/// its recorded inflow between two steps.
pub const FREEZE_TOLERANCE: f64 = 1e-12;

/// Reproducible random stream keyed by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform variate on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    /// Trigger time, interpolated within the step that fired.
    pub t_sc: f64,
    /// Clock of the state the collapse was applied to (end of that step).
    pub t_state: f64,
    pub chosen: ComponentId,
    pub channel: usize,
    pub labels: Labels,
    pub pre_variance: f64,
    pub post_variance: f64,
    pub hazard_at_hit: Vec<f64>,
}

/// Outcome of one trigger draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trigger {
    pub channel: usize,
    pub target: ComponentId,
    /// Position of the hit inside the step, in `[0, 1)`.
    pub fraction: f64,
}

/// Multinomial draw over `{none, channel 1, ..., channel n}` with
/// `p_n = (J_n / s) dt`, using one uniform against the cumulative
/// probabilities in channel order. Exactly one uniform is consumed per call.
///
/// Returns the channel index and the position of the hit inside the step.
pub fn draw_trigger(currents: &[f64], s: f64, dt: f64, rng: &mut RngStream) -> Result<Option<(usize, f64)>> {
    let probs: Vec<f64> = currents.iter().map(|j| j / s * dt).collect();
    let total: f64 = probs.iter().sum();
    if total > STEP_HAZARD_LIMIT {
        return Err(Error::StepTooLarge {
            what: "total hazard per step",
            value: total,
            limit: STEP_HAZARD_LIMIT,
        });
    }
    let u = rng.uniform();
    let mut lower = 0.0;
    for (n, p) in probs.iter().enumerate() {
        let upper = lower + p;
        if u < upper {
            return Ok(Some((n, (u - lower) / p)));
        }
        lower = upper;
    }
    Ok(None)
}

/// Trigger draw against the ledger's current hazards. A hit on a
/// component that is not ready is a rule violation.
pub fn sample_trigger(
    ledger: &CurrentLedger,
    state: &UniverseState,
    dt: f64,
    rng: &mut RngStream,
) -> Result<Option<Trigger>> {
    let Some((channel, fraction)) = draw_trigger(ledger.currents(), ledger.s(), dt, rng)? else {
        return Ok(None);
    };
    let target = ledger.targets()[channel];
    let component = state
        .get(target)
        .ok_or_else(|| Error::Structural(format!("trigger target {target} does not exist")))?;
    if component.kind != ComponentKind::Ready {
        return Err(Error::NotReady(target));
    }
    Ok(Some(Trigger { channel, target, fraction }))
}

/// Make `chosen` the sole realized component, launched from its normalized
/// capture-weighted snapshot; every other component is dropped and `s = 1`.
pub fn collapse(state: UniverseState, chosen: ComponentId) -> Result<UniverseState> {
    let idx = state.index_of(chosen)?;
    let t = state.t;
    let mut component = state.components.into_iter().nth(idx).expect("index checked");
    if component.kind != ComponentKind::Ready {
        return Err(Error::NotReady(chosen));
    }
    let mut psi = component.snapshot.take().ok_or_else(|| {
        Error::InvariantViolation(format!("ready component {chosen} has no capture snapshot"))
    })?;
    psi.normalize()
        .map_err(|_| Error::InvariantViolation(format!("ready component {chosen} has an empty snapshot")))?;
    component.psi = psi;
    component.kind = ComponentKind::Realized;
    component.born_at = t;
    Ok(UniverseState { components: vec![component], t, s: 1.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub enum FreezeViolation {
    /// A channel drains a ready component.
    ReadySourcedChannel { channel: String, source: ComponentId },
    /// A ready component changed by more than its recorded inflow.
    SelfEvolution { component: ComponentId, difference: f64 },
    /// A ready component present before the step vanished without a collapse.
    Vanished { component: ComponentId },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FreezeReport {
    pub violations: Vec<FreezeViolation>,
}

impl FreezeReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Ready densities expected after a step: content before the step plus
/// the inflow recorded by drain/fill.
#[derive(Debug, Clone, PartialEq)]
pub struct FreezeBaseline {
    dx: f64,
    expected: Vec<(ComponentId, Vec<f64>)>,
}

impl FreezeBaseline {
    pub fn capture(state: &UniverseState) -> Self {
        let dx = state.components.first().map_or(1.0, |c| c.psi.grid().dx());
        let expected = state
            .ready()
            .map(|c| (c.id, c.psi.density().collect()))
            .collect();
        Self { dx, expected }
    }

    pub fn add_inflow(&mut self, target: ComponentId, inflow: &[f64]) {
        if let Some((_, density)) = self.expected.iter_mut().find(|(id, _)| *id == target) {
            for (d, add) in density.iter_mut().zip(inflow) {
                *d += add;
            }
        }
    }
}

/// Check that no channel is sourced from a ready component and, given a
/// baseline, that every ready component changed only by its inflow.
pub fn assert_freeze(
    state: &UniverseState,
    channels: &[CaptureChannel],
    baseline: Option<&FreezeBaseline>,
) -> FreezeReport {
    let mut report = FreezeReport::default();
    for ch in channels {
        if state.get(ch.source).is_some_and(|c| c.is_ready()) {
            report.violations.push(FreezeViolation::ReadySourcedChannel {
                channel: ch.label.clone(),
                source: ch.source,
            });
        }
    }
    if let Some(baseline) = baseline {
        for (id, expected) in &baseline.expected {
            match state.get(*id) {
                Some(c) if c.is_ready() => {
                    let difference: f64 = c
                        .psi
                        .density()
                        .zip(expected)
                        .map(|(p, e)| (p - e).abs())
                        .sum::<f64>()
                        * baseline.dx;
                    if difference >= FREEZE_TOLERANCE {
                        report
                            .violations
                            .push(FreezeViolation::SelfEvolution { component: *id, difference });
                    }
                }
                _ => report.violations.push(FreezeViolation::Vanished { component: *id }),
            }
        }
    }
    report
}

/// Per-step options of the engine loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepChecks {
    /// Run [`assert_freeze`] and the component invariants every step.
    pub enabled: bool,
}

impl Default for StepChecks {
    fn default() -> Self {
        Self { enabled: cfg!(debug_assertions) }
    }
}

/// Result of one engine step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Currents in effect over the step, in channel order.
    pub currents: Vec<f64>,
    pub event: Option<CollapseEvent>,
}

/// Deterministic part of a step: unitary step on the realized branch,
/// currents, drain/fill, and ledger update. Returns the currents in effect
/// over the step.
pub fn advance(
    state: &mut UniverseState,
    ledger: &mut CurrentLedger,
    channels: &[CaptureChannel],
    propagator: &mut Propagator,
    checks: StepChecks,
) -> Result<Vec<f64>> {
    let dt = propagator.dt();
    let mut baseline = checks.enabled.then(|| FreezeBaseline::capture(state));

    let realized = state.realized_index()?;
    propagator.step(&mut state.components[realized].psi)?;

    let currents = channel_currents(channels, state)?;
    let inflows = drain_with_currents(state, channels, &currents, dt)?;
    state.t += dt;
    if !channels.is_empty() {
        ledger.record(&currents, state.s, state.t, dt)?;
    }

    if let Some(baseline) = baseline.as_mut() {
        for (ch, inflow) in channels.iter().zip(&inflows) {
            baseline.add_inflow(ch.target, inflow);
        }
        let report = assert_freeze(state, channels, Some(baseline));
        if !report.is_empty() {
            return Err(Error::InvariantViolation(format!("freeze violated: {:?}", report.violations)));
        }
        state.check_invariants()?;
    }
    Ok(currents)
}

/// One engine step. Order is fixed: unitary step on the realized branch,
/// currents, drain/fill, ledger update, trigger, and collapse on a hit.
pub fn run_step(
    state: &mut UniverseState,
    ledger: &mut CurrentLedger,
    channels: &[CaptureChannel],
    propagator: &mut Propagator,
    rng: &mut RngStream,
    checks: StepChecks,
) -> Result<StepOutcome> {
    let dt = propagator.dt();
    let currents = advance(state, ledger, channels, propagator, checks)?;

    let event = match sample_trigger(ledger, state, dt, rng)? {
        None => None,
        Some(trigger) => {
            let pre_variance = position_variance(&state.realized()?.psi)?;
            let labels = state
                .get(trigger.target)
                .map(|c| c.labels.clone())
                .unwrap_or_default();
            let collapsed = collapse(std::mem::replace(state, empty_like(state)), trigger.target)?;
            *state = collapsed;
            if checks.enabled {
                check_collapsed(state)?;
            }
            let post_variance = position_variance(&state.realized()?.psi)?;
            Some(CollapseEvent {
                t_sc: state.t - dt + trigger.fraction * dt,
                t_state: state.t,
                chosen: trigger.target,
                channel: trigger.channel,
                labels,
                pre_variance,
                post_variance,
                hazard_at_hit: ledger.hazards().to_vec(),
            })
        }
    };
    Ok(StepOutcome { currents, event })
}

/// Exactly one component, realized, with unit norm.
fn check_collapsed(state: &UniverseState) -> Result<()> {
    match state.components.as_slice() {
        [c] if c.kind == ComponentKind::Realized && (c.norm_sqr() - 1.0).abs() <= 1e-10 => Ok(()),
        cs => Err(Error::InvariantViolation(format!(
            "collapse left {} component(s) where one realized unit-norm component is required",
            cs.len()
        ))),
    }
}

fn empty_like(state: &UniverseState) -> UniverseState {
    UniverseState { components: Vec::new(), t: state.t, s: 0.0 }
}
