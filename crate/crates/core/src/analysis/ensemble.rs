use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{oracle_first_hit_cdf, CdfTable};
use super::trajectory::{keep_row, run_trajectory, series_stride, PrecollapsePath, RunOptions, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::reduction::{RngStream, StepChecks};
use crate::scenario::{GridConfig, Scenario};
use crate::stats::{quantile_sorted, KsResult, MeanCi};

/// Significance level of the first-hit KS comparison.
pub const KS_ALPHA: f64 = 0.01;
pub const HISTOGRAM_BINS: usize = 50;
const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOptions {
    pub n_traj: usize,
    pub seed: u64,
    pub checks: StepChecks,
    /// Keep full series for trajectories with stream index below this.
    pub keep_series: usize,
    pub max_series_rows: usize,
    /// Compare first-hit times against the quadrature oracle.
    pub ks_oracle: bool,
    /// Replay trigger draws against the shared pre-collapse path instead of
    /// stepping every trajectory (first generation only).
    pub replay: bool,
    /// Execute trajectories in a shuffled order keyed by this seed.
    pub shuffle: Option<u64>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            n_traj: 1000,
            seed: 0,
            checks: StepChecks::default(),
            keep_series: 100,
            max_series_rows: super::trajectory::DEFAULT_SERIES_ROWS,
            ks_oracle: false,
            replay: true,
            shuffle: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize, samples: &[f64]) -> Self {
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &x in samples {
            let b = ((x - lo) / width).floor();
            if b >= 0.0 {
                counts[(b as usize).min(bins - 1)] += 1;
            }
        }
        Self { lo, hi, counts }
    }
}

/// Aggregates over the completed trajectories of one ensemble. Field order
/// is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub scenario: String,
    pub n_traj: usize,
    pub n_completed: usize,
    pub n_failed: usize,
    pub channels: Vec<String>,
    pub hits: Vec<usize>,
    pub no_hit: usize,
    pub hit_fractions: Vec<f64>,
    pub oracle_hit_fractions: Option<Vec<f64>>,
    pub t_sc_p05: f64,
    pub t_sc_p50: f64,
    pub t_sc_p95: f64,
    pub t_sc_histogram: Histogram,
    pub pre_variance: MeanCi,
    pub post_variance: MeanCi,
    pub baseline_variance: f64,
    pub variance_delta: f64,
    pub reduction_factor: f64,
    pub ks: Option<KsResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub stream: u64,
    pub error: String,
    pub numerical: bool,
}

/// Mean variance against time for an ensemble, sampled on the series rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub scenario: String,
    pub grid: GridConfig,
    pub dt: f64,
    pub t_max: f64,
    pub t: Vec<f64>,
    pub mean_variance: Vec<f64>,
    pub collapsed_fraction: Vec<f64>,
    pub mean_post_variance: Vec<f64>,
    pub baseline_variance: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub summary: EnsembleSummary,
    pub records: Vec<TrajectoryRecord>,
    pub failures: Vec<TrajectoryFailure>,
    pub variance: VarianceTable,
    pub oracle: Option<CdfTable>,
}

type StreamOutcome = Result<(TrajectoryRecord, Vec<f64>)>;

/// Step indices sampled by the series and the variance table.
fn table_steps(n_steps: usize, max_rows: usize) -> Vec<usize> {
    let stride = series_stride(n_steps, max_rows);
    (0..=n_steps).filter(|&k| keep_row(k, stride) || k == n_steps).collect()
}

/// Run `n_traj` trajectories on streams `0..n_traj` of `seed` and aggregate.
pub fn run_ensemble(scenario: &Scenario, opts: &EnsembleOptions) -> Result<EnsembleResult> {
    if opts.n_traj == 0 {
        return Err(Error::Argument("n_traj must be at least 1".into()));
    }
    let generations = scenario.config.generations;
    let steps = table_steps(scenario.n_steps(), opts.max_series_rows);
    let baseline_path = PrecollapsePath::compute(&scenario.baseline(), StepChecks { enabled: false })?;
    let variance_of = |path: &PrecollapsePath, k: usize| {
        if k == 0 {
            path.initial_variance
        } else {
            path.steps[k - 1].variance
        }
    };
    let table_t: Vec<f64> = steps.iter().map(|&k| if k == 0 { 0.0 } else { baseline_path.steps[k - 1].t }).collect();
    let baseline_variance: Vec<f64> = steps.iter().map(|&k| variance_of(&baseline_path, k)).collect();

    let path = if generations == 1 {
        Some(PrecollapsePath::compute(scenario, opts.checks)?)
    } else {
        None
    };
    let replay = opts.replay && path.is_some();

    let run_one = |stream: u64| -> Result<(TrajectoryRecord, Vec<f64>)> {
        let mut rng = RngStream::new(opts.seed, stream);
        let need_series = stream < opts.keep_series as u64 || path.is_none();
        let mut record = match (&path, replay) {
            (Some(p), true) => p
                .replay(&mut rng, need_series, opts.max_series_rows)
                .map_err(|e| Error::Trajectory { stream, source: Box::new(e) })?,
            _ => run_trajectory(
                scenario,
                &mut rng,
                RunOptions { checks: opts.checks, record_series: need_series, max_series_rows: opts.max_series_rows },
            )?,
        };
        let samples = match &path {
            Some(p) => {
                let collapse_t = record.first_event().map(|e| e.t_state);
                let post = record.first_event().map(|e| e.post_variance);
                steps
                    .iter()
                    .zip(&table_t)
                    .map(|(&k, &t)| match (collapse_t, post) {
                        (Some(tc), Some(v)) if tc <= t => v,
                        _ => variance_of(p, k),
                    })
                    .collect()
            }
            None => held_series(&record, &table_t),
        };
        if stream >= opts.keep_series as u64 {
            record.series = Vec::new();
        }
        Ok((record, samples))
    };

    let n = opts.n_traj;
    let mut records = Vec::with_capacity(n);
    let mut failures = Vec::new();
    let rows = table_t.len();
    let mut var_sum = vec![0.0; rows];
    let mut post_sum = vec![0.0; rows];
    let mut collapsed = vec![0usize; rows];
    let mut order_rng = opts.shuffle.map(ChaCha8Rng::seed_from_u64);

    for start in (0..n).step_by(CHUNK) {
        let mut order: Vec<u64> = (start as u64..(start + CHUNK).min(n) as u64).collect();
        if let Some(rng) = order_rng.as_mut() {
            order.shuffle(rng);
        }
        let mut results: Vec<(u64, StreamOutcome)> =
            order.par_iter().map(|&stream| (stream, run_one(stream))).collect();
        results.sort_by_key(|(stream, _)| *stream);
        for (stream, result) in results {
            match result {
                Ok((record, samples)) => {
                    let first_collapse = record.first_event().map(|e| e.t_state);
                    for i in 0..rows {
                        var_sum[i] += samples[i];
                        if first_collapse.is_some_and(|tc| tc <= table_t[i]) {
                            post_sum[i] += samples[i];
                            collapsed[i] += 1;
                        }
                    }
                    records.push(record);
                }
                Err(e) => failures.push(TrajectoryFailure {
                    stream,
                    numerical: e.is_numerical(),
                    error: e.to_string(),
                }),
            }
        }
    }

    let completed = records.len();
    let variance = VarianceTable {
        scenario: scenario.id().to_string(),
        grid: scenario.config.grid,
        dt: scenario.dt(),
        t_max: scenario.t_max(),
        t: table_t,
        mean_variance: var_sum.iter().map(|s| s / completed as f64).collect(),
        collapsed_fraction: collapsed.iter().map(|&c| c as f64 / completed as f64).collect(),
        mean_post_variance: post_sum
            .iter()
            .zip(&collapsed)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
            .collect(),
        baseline_variance,
    };

    let oracle = if opts.ks_oracle && !scenario.arms.is_empty() {
        Some(oracle_first_hit_cdf(scenario)?)
    } else {
        None
    };
    let summary = summarize(scenario, n, &records, failures.len(), &variance, oracle.as_ref());
    Ok(EnsembleResult { summary, records, failures, variance, oracle })
}

/// Variance at each table time, holding the last recorded row.
fn held_series(record: &TrajectoryRecord, times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut j = 0;
    for &t in times {
        while j + 1 < record.series.len() && record.series[j + 1].t <= t {
            j += 1;
        }
        out.push(record.series.get(j).map_or(f64::NAN, |r| r.variance));
    }
    out
}

/// Aggregate completed trajectories in stream order.
pub fn summarize(
    scenario: &Scenario,
    n_traj: usize,
    records: &[TrajectoryRecord],
    n_failed: usize,
    variance: &VarianceTable,
    oracle: Option<&CdfTable>,
) -> EnsembleSummary {
    let n_channels = scenario.arms.len();
    let mut hits = vec![0usize; n_channels];
    let mut no_hit = 0;
    let mut t_sc = Vec::new();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for record in records {
        match record.first_event() {
            Some(e) => {
                hits[e.channel] += 1;
                t_sc.push(e.t_sc);
                pre.push(e.pre_variance);
                post.push(e.post_variance);
            }
            None => no_hit += 1,
        }
    }
    let n_hit = t_sc.len();
    let mut sorted = t_sc.clone();
    sorted.sort_by(f64::total_cmp);
    let post_ci = MeanCi::from_samples(&post);
    let baseline_variance = *variance.baseline_variance.last().expect("table is never empty");
    let ks = oracle
        .filter(|_| n_hit > 0)
        .map(|o| KsResult::new(&t_sc, |t| o.conditional_cdf(t), KS_ALPHA));
    EnsembleSummary {
        scenario: scenario.id().to_string(),
        n_traj,
        n_completed: records.len(),
        n_failed,
        channels: scenario.arms.iter().map(|a| a.label.clone()).collect(),
        hit_fractions: hits
            .iter()
            .map(|&h| if n_hit > 0 { h as f64 / n_hit as f64 } else { f64::NAN })
            .collect(),
        hits,
        no_hit,
        oracle_hit_fractions: oracle.map(|o| o.hit_fractions()),
        t_sc_p05: quantile_sorted(&sorted, 0.05),
        t_sc_p50: quantile_sorted(&sorted, 0.50),
        t_sc_p95: quantile_sorted(&sorted, 0.95),
        t_sc_histogram: Histogram::new(0.0, scenario.t_max(), HISTOGRAM_BINS, &t_sc),
        pre_variance: MeanCi::from_samples(&pre),
        post_variance: post_ci,
        baseline_variance,
        variance_delta: baseline_variance - post_ci.mean,
        reduction_factor: baseline_variance / post_ci.mean,
        ks,
    }
}
