//! Schrödinger evolution on 1-D grids and probability-current bookkeeping.

mod channel;
mod grid;
mod propagator;

pub use channel::{
    capture_snapshot, channel_current, channel_currents, drain_and_fill, drain_with_currents,
    update_ledger, CaptureChannel, CurrentLedger, LedgerEntry, STEP_HAZARD_LIMIT,
};
pub use grid::{position_variance, Grid1D, GridWavefunction, MIN_GRID_POINTS};
pub use propagator::{step_unitary, Boundary, Hamiltonian1D, Propagator};
