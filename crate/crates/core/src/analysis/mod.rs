//! Trajectories, ensembles, oracle cross-checks, and localization reports.

mod ensemble;
mod oracle;
mod report;
pub mod selftest;
mod trajectory;

pub use ensemble::{
    run_ensemble, summarize, EnsembleOptions, EnsembleResult, EnsembleSummary, Histogram,
    TrajectoryFailure, VarianceTable, HISTOGRAM_BINS, KS_ALPHA,
};
pub use oracle::{oracle_first_hit_cdf, oracle_first_hit_cdf_refined, CdfTable, ORACLE_REFINEMENT};
pub use report::{localization_report, LocalizationReport, ReportRow};
pub use trajectory::{
    run_trajectory, PathStep, PrecollapsePath, RunOptions, SeriesRow, TrajectoryRecord,
    DEFAULT_SERIES_ROWS,
};

use crate::error::Result;
use crate::reduction::{draw_trigger, RngStream};

/// First hit of the trigger under constant currents `rates` with `s = 1`.
///
/// Returns the channel and the hit time, interpolated inside the step.
/// Draws until a hit or until `max_steps` steps have passed.
pub fn constant_rate_first_hit(
    rates: &[f64],
    dt: f64,
    max_steps: usize,
    rng: &mut RngStream,
) -> Result<Option<(usize, f64)>> {
    for k in 0..max_steps {
        if let Some((channel, fraction)) = draw_trigger(rates, 1.0, dt, rng)? {
            return Ok(Some((channel, (k as f64 + fraction) * dt)));
        }
    }
    Ok(None)
}
