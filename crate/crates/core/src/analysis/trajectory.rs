use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::{advance, draw_trigger, run_step, CollapseEvent, RngStream, StepChecks};
use crate::scenario::Scenario;
use crate::wave::{position_variance, CurrentLedger, GridWavefunction, Propagator};

/// Series rows kept per trajectory by default.
pub const DEFAULT_SERIES_ROWS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub variance: f64,
    pub s: f64,
    pub hazards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub stream: u64,
    pub scenario: String,
    pub events: Vec<CollapseEvent>,
    /// Decimated time series; empty when series recording is off.
    pub series: Vec<SeriesRow>,
    pub final_t: f64,
    pub final_variance: f64,
    pub final_s: f64,
}

impl TrajectoryRecord {
    pub fn first_event(&self) -> Option<&CollapseEvent> {
        self.events.first()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub checks: StepChecks,
    pub record_series: bool,
    pub max_series_rows: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            checks: StepChecks::default(),
            record_series: true,
            max_series_rows: DEFAULT_SERIES_ROWS,
        }
    }
}

/// Row stride that keeps at most `max_rows` of the `n_steps + 1` rows.
pub(crate) fn series_stride(n_steps: usize, max_rows: usize) -> usize {
    (n_steps + 1).div_ceil(max_rows.max(2) - 1).max(1)
}

pub(crate) fn keep_row(k: usize, stride: usize) -> bool {
    k.is_multiple_of(stride)
}

/// Run one trajectory through the full engine until `t_max` or until the
/// configured number of collapse generations has happened.
pub fn run_trajectory(scenario: &Scenario, rng: &mut RngStream, opts: RunOptions) -> Result<TrajectoryRecord> {
    let stream = rng.stream();
    run_inner(scenario, rng, opts).map_err(|e| Error::Trajectory { stream, source: Box::new(e) })
}

fn run_inner(scenario: &Scenario, rng: &mut RngStream, opts: RunOptions) -> Result<TrajectoryRecord> {
    let (mut state, mut channels) = scenario.initial_state()?;
    let mut ledger = CurrentLedger::new(&channels, state.s);
    let mut hazards = vec![0.0; scenario.arms.len()];
    let mut propagator = Propagator::new(&scenario.hamiltonian, scenario.dt())?;
    let n_steps = scenario.n_steps();
    let stride = series_stride(n_steps, opts.max_series_rows);
    let generations = scenario.config.generations;

    let mut series = Vec::new();
    let mut variance = position_variance(&state.realized()?.psi)?;
    if opts.record_series {
        series.push(SeriesRow { t: state.t, variance, s: state.s, hazards: hazards.clone() });
    }
    let mut events = Vec::new();
    for k in 1..=n_steps {
        let outcome = run_step(&mut state, &mut ledger, &channels, &mut propagator, rng, opts.checks)?;
        if !channels.is_empty() {
            hazards.copy_from_slice(ledger.hazards());
        }
        let done = match outcome.event {
            Some(event) => {
                variance = event.post_variance;
                events.push(event);
                if events.len() < generations {
                    channels = scenario.arm(&mut state)?;
                    ledger = CurrentLedger::new(&channels, state.s);
                    false
                } else {
                    channels.clear();
                    true
                }
            }
            None => {
                variance = position_variance(&state.realized()?.psi)?;
                false
            }
        };
        if opts.record_series && (keep_row(k, stride) || k == n_steps || done) {
            series.push(SeriesRow { t: state.t, variance, s: state.s, hazards: hazards.clone() });
        }
        if done {
            break;
        }
    }
    Ok(TrajectoryRecord {
        seed: rng.seed(),
        stream: rng.stream(),
        scenario: scenario.id().to_string(),
        events,
        series,
        final_t: state.t,
        final_variance: variance,
        final_s: state.s,
    })
}

/// One step of the shared pre-collapse path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub t: f64,
    pub currents: Vec<f64>,
    pub s: f64,
    pub hazards: Vec<f64>,
    /// Realized variance after the step.
    pub variance: f64,
    /// Variance of the launched state if channel `n` fires on this step.
    pub post_variance: Vec<f64>,
}

/// The deterministic pre-collapse evolution of a scenario.
///
/// Before the first collapse nothing is random: every trajectory sees the
/// same currents and the same realized state, and the trigger consumes
/// exactly one uniform per step. Replaying trigger draws against this path
/// reproduces the full engine's first-generation records exactly.
#[derive(Debug, Clone)]
pub struct PrecollapsePath {
    pub scenario: String,
    pub dt: f64,
    pub initial_variance: f64,
    pub initial_s: f64,
    pub steps: Vec<PathStep>,
    pub labels: Vec<crate::component::Labels>,
    pub targets: Vec<crate::component::ComponentId>,
}

impl PrecollapsePath {
    pub fn compute(scenario: &Scenario, checks: StepChecks) -> Result<Self> {
        let (mut state, channels) = scenario.initial_state()?;
        let mut ledger = CurrentLedger::new(&channels, state.s);
        let mut propagator = Propagator::new(&scenario.hamiltonian, scenario.dt())?;
        let initial_variance = position_variance(&state.realized()?.psi)?;
        let state_s0 = state.s;
        let n_steps = scenario.n_steps();
        let mut steps = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            let currents = advance(&mut state, &mut ledger, &channels, &mut propagator, checks)?;
            let variance = position_variance(&state.realized()?.psi)?;
            let post_variance = channels
                .iter()
                .map(|ch| {
                    let snapshot = state.get(ch.target).and_then(|c| c.snapshot.as_ref());
                    launched_variance(snapshot)
                })
                .collect();
            steps.push(PathStep {
                t: state.t,
                currents,
                s: state.s,
                hazards: ledger.hazards().to_vec(),
                variance,
                post_variance,
            });
        }
        Ok(Self {
            scenario: scenario.id().to_string(),
            dt: scenario.dt(),
            initial_variance,
            initial_s: state_s0,
            steps,
            labels: scenario.arms.iter().map(|a| a.labels.clone()).collect(),
            targets: channels.iter().map(|c| c.target).collect(),
        })
    }

    pub fn n_channels(&self) -> usize {
        self.targets.len()
    }

    /// First-generation trajectory for `rng`, identical to what
    /// [`run_trajectory`] produces with `generations = 1`.
    pub fn replay(&self, rng: &mut RngStream, record_series: bool, max_series_rows: usize) -> Result<TrajectoryRecord> {
        let n_steps = self.steps.len();
        let stride = series_stride(n_steps, max_series_rows);
        let n_channels = self.n_channels();
        let mut series = Vec::new();
        if record_series {
            series.push(SeriesRow { t: 0.0, variance: self.initial_variance, s: self.initial_s, hazards: vec![0.0; n_channels] });
        }
        let mut events = Vec::new();
        let mut last = None;
        for (i, step) in self.steps.iter().enumerate() {
            let k = i + 1;
            let hit = draw_trigger(&step.currents, step.s, self.dt, rng)?;
            let (variance, s) = match hit {
                Some((channel, fraction)) => {
                    let post_variance = step.post_variance[channel];
                    if !post_variance.is_finite() {
                        return Err(Error::InvariantViolation(format!(
                            "channel {channel} fired with an empty snapshot at t = {}",
                            step.t
                        )));
                    }
                    events.push(CollapseEvent {
                        t_sc: step.t - self.dt + fraction * self.dt,
                        t_state: step.t,
                        chosen: self.targets[channel],
                        channel,
                        labels: self.labels[channel].clone(),
                        pre_variance: step.variance,
                        post_variance,
                        hazard_at_hit: step.hazards.clone(),
                    });
                    (post_variance, 1.0)
                }
                None => (step.variance, step.s),
            };
            if record_series && (keep_row(k, stride) || k == n_steps || hit.is_some()) {
                series.push(SeriesRow { t: step.t, variance, s, hazards: step.hazards.clone() });
            }
            last = Some((step.t, variance, s));
            if hit.is_some() {
                break;
            }
        }
        let (final_t, final_variance, final_s) = last.unwrap_or((0.0, self.initial_variance, self.initial_s));
        Ok(TrajectoryRecord {
            seed: rng.seed(),
            stream: rng.stream(),
            scenario: self.scenario.clone(),
            events,
            series,
            final_t,
            final_variance,
            final_s,
        })
    }
}

fn launched_variance(snapshot: Option<&GridWavefunction>) -> f64 {
    let Some(snapshot) = snapshot else { return f64::NAN };
    let mut psi = snapshot.clone();
    if psi.normalize().is_err() {
        return f64::NAN;
    }
    position_variance(&psi).unwrap_or(f64::NAN)
}
