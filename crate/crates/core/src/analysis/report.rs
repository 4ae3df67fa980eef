use serde::{Deserialize, Serialize};

use super::ensemble::VarianceTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub baseline_variance: f64,
    pub ensemble_variance: f64,
    pub collapsed_fraction: f64,
    pub mean_post_variance: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub ensemble: String,
    pub baseline: String,
    pub rows: Vec<ReportRow>,
    /// Baseline over ensemble-mean variance at `t_max`.
    pub reduction_factor: f64,
    /// Baseline variance over the mean variance of collapsed trajectories
    /// at `t_max`.
    pub post_collapse_reduction_factor: f64,
}

/// Compare an ensemble's mean variance with a baseline run on the same grid
/// and time axis.
pub fn localization_report(ensemble: &VarianceTable, baseline: &VarianceTable) -> Result<LocalizationReport> {
    if ensemble.grid != baseline.grid {
        return Err(Error::Argument(format!(
            "grids differ: {:?} vs {:?}",
            ensemble.grid, baseline.grid
        )));
    }
    if ensemble.t_max != baseline.t_max || ensemble.dt != baseline.dt {
        return Err(Error::Argument(format!(
            "time axes differ: t_max {} / dt {} vs t_max {} / dt {}",
            ensemble.t_max, ensemble.dt, baseline.t_max, baseline.dt
        )));
    }
    if ensemble.t.len() != baseline.t.len()
        || ensemble.t.iter().zip(&baseline.t).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(Error::Argument("variance tables are sampled at different times".into()));
    }
    if ensemble.t.is_empty() {
        return Err(Error::Argument("variance tables are empty".into()));
    }
    let rows: Vec<ReportRow> = (0..ensemble.t.len())
        .map(|i| ReportRow {
            t: ensemble.t[i],
            baseline_variance: baseline.mean_variance[i],
            ensemble_variance: ensemble.mean_variance[i],
            collapsed_fraction: ensemble.collapsed_fraction[i],
            mean_post_variance: ensemble.mean_post_variance[i],
            factor: baseline.mean_variance[i] / ensemble.mean_variance[i],
        })
        .collect();
    let last = rows.last().expect("checked non-empty");
    Ok(LocalizationReport {
        ensemble: ensemble.scenario.clone(),
        baseline: baseline.scenario.clone(),
        reduction_factor: last.factor,
        post_collapse_reduction_factor: last.baseline_variance / last.mean_post_variance,
        rows,
    })
}
