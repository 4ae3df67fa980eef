use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::wave::{channel_currents, drain_with_currents, Propagator};

/// Fine steps per engine step used by the oracle.
pub const ORACLE_REFINEMENT: usize = 100;

/// First-hit CDFs sampled on the oracle's fine time grid.
///
/// `hazard[n][j]` is `H_n(t_j)`; `channel_cdf[n][j]` is the probability that
/// channel `n` fires first by `t_j`, `∫ h_n e^{-H}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub t: Vec<f64>,
    pub hazard: Vec<Vec<f64>>,
    pub channel_cdf: Vec<Vec<f64>>,
}

impl CdfTable {
    /// Integrate hazard rates `h_n(t_j)`, sampled every `dt` from `t = 0`,
    /// with the trapezoid rule. `samples[j][n]` is `h_n(t_j)`.
    pub fn from_rate_samples(dt: f64, samples: &[Vec<f64>]) -> Self {
        let n = samples.first().map_or(0, Vec::len);
        let mut t = Vec::with_capacity(samples.len());
        let mut hazard = vec![Vec::with_capacity(samples.len()); n];
        let mut channel_cdf = vec![Vec::with_capacity(samples.len()); n];
        t.push(0.0);
        for c in 0..n {
            hazard[c].push(0.0);
            channel_cdf[c].push(0.0);
        }
        let mut total_h = 0.0f64;
        for (j, pair) in samples.windows(2).enumerate() {
            let (rate, next) = (&pair[0], &pair[1]);
            let survival_before = (-total_h).exp();
            let step_h: f64 = rate.iter().zip(next).map(|(a, b)| 0.5 * (a + b) * dt).sum();
            let survival_after = (-(total_h + step_h)).exp();
            for c in 0..n {
                let h = hazard[c][j] + 0.5 * (rate[c] + next[c]) * dt;
                hazard[c].push(h);
                let f = channel_cdf[c][j] + 0.5 * (rate[c] * survival_before + next[c] * survival_after) * dt;
                channel_cdf[c].push(f);
            }
            total_h += step_h;
            t.push((j + 1) as f64 * dt);
        }
        Self { t, hazard, channel_cdf }
    }

    pub fn n_channels(&self) -> usize {
        self.hazard.len()
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("table has at least one point")
    }

    /// Total hazard `Σ_n H_n` at grid point `j`.
    pub fn total_hazard_at(&self, j: usize) -> f64 {
        self.hazard.iter().map(|h| h[j]).sum()
    }

    /// `1 - e^{-H(t)}`, linear in `t` between grid points.
    pub fn total_cdf(&self, t: f64) -> f64 {
        let h = self.interpolate(t, |j| self.total_hazard_at(j));
        -(-h).exp_m1()
    }

    pub fn total_hazard(&self, t: f64) -> f64 {
        self.interpolate(t, |j| self.total_hazard_at(j))
    }

    pub fn channel(&self, n: usize, t: f64) -> f64 {
        self.interpolate(t, |j| self.channel_cdf[n][j])
    }

    /// First-hit CDF conditioned on a hit before the end of the table.
    pub fn conditional_cdf(&self, t: f64) -> f64 {
        let end = self.total_cdf(self.t_end());
        if end > 0.0 {
            (self.total_cdf(t) / end).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Share of first hits going to each channel by the end of the table.
    pub fn hit_fractions(&self) -> Vec<f64> {
        let last = self.t.len() - 1;
        let total: f64 = self.channel_cdf.iter().map(|c| c[last]).sum();
        self.channel_cdf
            .iter()
            .map(|c| if total > 0.0 { c[last] / total } else { f64::NAN })
            .collect()
    }

    fn interpolate(&self, t: f64, value: impl Fn(usize) -> f64) -> f64 {
        let n = self.t.len();
        if t <= self.t[0] {
            return value(0);
        }
        if t >= self.t[n - 1] {
            return value(n - 1);
        }
        let j = self.t.partition_point(|&tj| tj <= t).max(1);
        let (t0, t1) = (self.t[j - 1], self.t[j]);
        let w = (t - t0) / (t1 - t0);
        value(j - 1) * (1.0 - w) + value(j) * w
    }
}

/// Reference first-hit CDFs for the first generation of `scenario`,
/// integrating `J_n / s` with the trapezoid rule at `dt / 100`.
pub fn oracle_first_hit_cdf(scenario: &Scenario) -> Result<CdfTable> {
    oracle_first_hit_cdf_refined(scenario, ORACLE_REFINEMENT)
}

pub fn oracle_first_hit_cdf_refined(scenario: &Scenario, refinement: usize) -> Result<CdfTable> {
    if refinement == 0 {
        return Err(Error::Argument("refinement must be at least 1".into()));
    }
    let fine_dt = scenario.dt() / refinement as f64;
    let n_fine = scenario.n_steps() * refinement;
    let (mut state, channels) = scenario.initial_state()?;
    let n = channels.len();
    let mut propagator = Propagator::new(&scenario.hamiltonian, fine_dt)?;

    let mut samples = Vec::with_capacity(n_fine + 1);
    if n == 0 {
        samples.push(Vec::new());
        return Ok(CdfTable::from_rate_samples(fine_dt, &samples));
    }
    samples.push(channel_currents(&channels, &state)?.iter().map(|j| j / state.s).collect());
    for _ in 0..n_fine {
        let realized = state.realized_index()?;
        propagator.step(&mut state.components[realized].psi)?;
        let currents = channel_currents(&channels, &state)?;
        samples.push(currents.iter().map(|c| c / state.s).collect());
        drain_with_currents(&mut state, &channels, &currents, fine_dt)?;
    }
    Ok(CdfTable::from_rate_samples(fine_dt, &samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build, CaseId, ScenarioConfig};

    fn short(id: CaseId) -> Scenario {
        let mut cfg = ScenarioConfig::default_for(id);
        cfg.t_max = 1.0;
        build(&cfg).unwrap()
    }

    #[test]
    fn baseline_has_empty_table() {
        let table = oracle_first_hit_cdf(&short(CaseId::Baseline)).unwrap();
        assert_eq!(table.n_channels(), 0);
        assert_eq!(table.t.len(), 1);
    }

    #[test]
    fn constant_rate_is_exponential() {
        let samples = vec![vec![0.3, 0.2]; 1001];
        let table = CdfTable::from_rate_samples(0.01, &samples);
        for &t in &[0.5, 2.0, 7.25, 10.0] {
            assert!((table.total_cdf(t) - (1.0 - (-0.5 * t).exp())).abs() < 1e-12);
        }
        let f = table.hit_fractions();
        assert!((f[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_monotone_and_consistent() {
        let table = oracle_first_hit_cdf_refined(&short(CaseId::Case2), 10).unwrap();
        let mut prev = 0.0;
        for j in 0..table.t.len() {
            let f = table.total_cdf(table.t[j]);
            assert!(f >= prev - 1e-15);
            prev = f;
        }
        let end = table.t_end();
        let sum: f64 = (0..table.n_channels()).map(|n| table.channel(n, end)).sum();
        assert!((sum - table.total_cdf(end)).abs() < 1e-6, "{sum} vs {}", table.total_cdf(end));
        assert!((table.hit_fractions().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
