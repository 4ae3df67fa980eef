//! Capture channels, probability-current bookkeeping, and the drain/fill
//! transfer from the realized component into ready components.
//!
//! The current into a ready component is modeled as a capture-rate
//! functional of the realized density: `J_n = Σ_x Γ_n(x) |ψ(x)|² dx`. The
//! realized branch loses density pointwise in proportion to `Γ_n(x)|ψ(x)|²`,
//! and the target accumulates exactly that density.

use std::collections::VecDeque;

use num_complex::Complex64;

use super::grid::{Grid1D, GridWavefunction};
use crate::component::{ComponentId, ComponentKind, UniverseState};
use crate::error::{Error, Result};

/// Upper bound on `dt · Σ J_n / s` for a single step.
pub const STEP_HAZARD_LIMIT: f64 = 0.1;

/// Irreversible coupling from the realized component into one ready
/// component, with rate density `gamma` (1/time) per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureChannel {
    pub source: ComponentId,
    pub target: ComponentId,
    grid: Grid1D,
    gamma: Vec<f64>,
    pub label: String,
}

impl CaptureChannel {
    pub fn new(
        source: ComponentId,
        target: ComponentId,
        grid: Grid1D,
        gamma: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if gamma.len() != grid.len() {
            return Err(Error::Structural(format!(
                "gamma has {} samples for a {}-point grid",
                gamma.len(),
                grid.len()
            )));
        }
        if let Some(i) = gamma.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Argument(format!(
                "capture rate must be finite and non-negative (index {i}: {})",
                gamma[i]
            )));
        }
        Ok(Self { source, target, grid, gamma, label: label.into() })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn max_rate(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }

    /// Same coupling, re-pointed at a different source/target pair.
    pub fn retarget(&self, source: ComponentId, target: ComponentId) -> Self {
        Self { source, target, ..self.clone() }
    }
}

/// `J = Σ_x Γ(x) |ψ(x)|² dx`.
pub fn channel_current(channel: &CaptureChannel, realized_psi: &GridWavefunction) -> Result<f64> {
    realized_psi.same_grid(&channel.grid)?;
    let sum: f64 = channel
        .gamma
        .iter()
        .zip(realized_psi.density())
        .map(|(g, p)| g * p)
        .sum();
    Ok(sum * channel.grid.dx())
}

/// Currents of every channel, in channel order, from the realized branch.
pub fn channel_currents(channels: &[CaptureChannel], state: &UniverseState) -> Result<Vec<f64>> {
    let realized = state.realized()?;
    channels.iter().map(|c| channel_current(c, &realized.psi)).collect()
}

/// `sqrt(Γ) ψ`: what the channel sees of the realized branch.
pub fn capture_snapshot(channel: &CaptureChannel, psi: &GridWavefunction) -> Result<GridWavefunction> {
    psi.same_grid(&channel.grid)?;
    let amps = psi
        .amps()
        .iter()
        .zip(&channel.gamma)
        .map(|(a, g)| a * g.sqrt())
        .collect();
    GridWavefunction::new(channel.grid, amps)
}

fn check_step_hazard(currents: &[f64], s: f64, dt: f64) -> Result<()> {
    let total: f64 = currents.iter().sum();
    let hazard = dt * total / s;
    if hazard > STEP_HAZARD_LIMIT {
        return Err(Error::StepTooLarge {
            what: "total hazard per step",
            value: hazard,
            limit: STEP_HAZARD_LIMIT,
        });
    }
    Ok(())
}

/// Move `J_n dt` of squared norm from the realized component into each
/// channel's ready target, using currents already computed for this step.
///
/// Returns the per-channel inflow densities `Γ_n |ψ|² dt` that were added.
pub fn drain_with_currents(
    state: &mut UniverseState,
    channels: &[CaptureChannel],
    currents: &[f64],
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    if channels.is_empty() {
        return Ok(Vec::new());
    }
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    if currents.len() != channels.len() {
        return Err(Error::Structural("one current per channel required".into()));
    }
    let realized_idx = state.realized_index()?;
    let realized_id = state.components[realized_idx].id;
    let grid = *state.components[realized_idx].psi.grid();

    let mut target_idx = Vec::with_capacity(channels.len());
    for ch in channels {
        if ch.grid != grid {
            return Err(Error::Structural(format!("channel '{}' is on a different grid", ch.label)));
        }
        if ch.source != realized_id {
            return Err(Error::Structural(format!(
                "channel '{}' is sourced from {}, not the realized component {realized_id}",
                ch.label, ch.source
            )));
        }
        let idx = state.index_of(ch.target)?;
        if state.components[idx].kind != ComponentKind::Ready {
            return Err(Error::Structural(format!(
                "channel '{}' targets {} which is not ready",
                ch.label, ch.target
            )));
        }
        target_idx.push(idx);
    }
    check_step_hazard(currents, state.s, dt)?;

    let n = grid.len();
    let mut keep = vec![1.0; n];
    for ch in channels {
        for (k, g) in keep.iter_mut().zip(&ch.gamma) {
            *k -= g * dt;
        }
    }
    if let Some(worst) = keep.iter().copied().reduce(f64::min) {
        if worst < 0.0 {
            return Err(Error::StepTooLarge {
                what: "pointwise capture fraction per step",
                value: 1.0 - worst,
                limit: 1.0,
            });
        }
    }

    let source_psi = state.components[realized_idx].psi.clone();
    let source_density: Vec<f64> = source_psi.density().collect();
    let mut inflows = Vec::with_capacity(channels.len());
    for (ch, &idx) in channels.iter().zip(&target_idx) {
        let inflow: Vec<f64> = ch.gamma.iter().zip(&source_density).map(|(g, p)| g * p * dt).collect();
        let target = &mut state.components[idx];
        for (a, add) in target.psi.amps_mut().iter_mut().zip(&inflow) {
            *a = Complex64::new((a.norm_sqr() + add).sqrt(), 0.0);
        }
        target.snapshot = Some(capture_snapshot(ch, &source_psi)?);
        inflows.push(inflow);
    }
    for (a, k) in state.components[realized_idx].psi.amps_mut().iter_mut().zip(&keep) {
        *a *= k.sqrt();
    }
    Ok(inflows)
}

/// Drain the realized component into every channel's ready target over
/// `dt`. `s` is unchanged.
pub fn drain_and_fill(
    mut state: UniverseState,
    channels: &[CaptureChannel],
    dt: f64,
) -> Result<UniverseState> {
    let currents = channel_currents(channels, &state)?;
    drain_with_currents(&mut state, channels, &currents, dt)?;
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub t: f64,
    pub currents: Vec<f64>,
    pub s: f64,
    pub hazards: Vec<f64>,
}

/// Per-channel currents and cumulative hazards `H_n = ∫ J_n / s dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentLedger {
    targets: Vec<ComponentId>,
    currents: Vec<f64>,
    hazards: Vec<f64>,
    s: f64,
    history: VecDeque<LedgerEntry>,
    history_capacity: usize,
}

impl CurrentLedger {
    pub const DEFAULT_HISTORY: usize = 256;

    pub fn new(channels: &[CaptureChannel], s: f64) -> Self {
        Self::with_history(channels, s, Self::DEFAULT_HISTORY)
    }

    pub fn with_history(channels: &[CaptureChannel], s: f64, history_capacity: usize) -> Self {
        Self {
            targets: channels.iter().map(|c| c.target).collect(),
            currents: vec![0.0; channels.len()],
            hazards: vec![0.0; channels.len()],
            s,
            history: VecDeque::with_capacity(history_capacity.min(1024)),
            history_capacity,
        }
    }

    pub fn targets(&self) -> &[ComponentId] {
        &self.targets
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    pub fn hazards(&self) -> &[f64] {
        &self.hazards
    }

    pub fn total_hazard(&self) -> f64 {
        self.hazards.iter().sum()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = &LedgerEntry> {
        self.history.iter()
    }

    /// Record currents that were in effect over `[t - dt, t]`.
    pub fn record(&mut self, currents: &[f64], s: f64, t: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        if currents.len() != self.targets.len() {
            return Err(Error::Structural("one current per channel required".into()));
        }
        if let Some(j) = currents.iter().find(|j| !(j.is_finite() && **j >= 0.0)) {
            return Err(Error::Numerical(format!("invalid probability current {j}")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Numerical(format!("invalid total square modulus {s}")));
        }
        self.currents.copy_from_slice(currents);
        self.s = s;
        for (h, j) in self.hazards.iter_mut().zip(currents) {
            *h += j / s * dt;
        }
        if self.history_capacity > 0 {
            if self.history.len() == self.history_capacity {
                self.history.pop_front();
            }
            self.history.push_back(LedgerEntry {
                t,
                currents: self.currents.clone(),
                s,
                hazards: self.hazards.clone(),
            });
        }
        Ok(())
    }
}

/// Recompute the currents from `state` and advance the hazards by `dt`.
pub fn update_ledger(
    ledger: &mut CurrentLedger,
    state: &UniverseState,
    channels: &[CaptureChannel],
    dt: f64,
) -> Result<()> {
    let currents = channel_currents(channels, state)?;
    ledger.record(&currents, state.s, state.t, dt)
}
