//! Decoherent batches: a configured partition of a continuum of detector
//! (or atom) configurations, with one capture channel per batch.
//!
//! Decoherence enters structurally. The partition is an input; nothing
//! here simulates an environment. A channel's rate density is the capture
//! kernel integrated over its batch, weighted by the configuration density:
//! `Γ_a(x) = ∫_{batch a} k(x, u) w(u) du`. Because the batches tile the
//! extent, `Σ_a Γ_a` is the same for every partition.

use serde::{Deserialize, Serialize};

use crate::component::ComponentId;
use crate::error::{Error, Result};
use crate::quadrature::Composite;
use crate::wave::{CaptureChannel, Grid1D};

/// Relative tolerance of the partition-of-unity check in
/// [`build_batch_channels`].
pub const PARTITION_OF_UNITY_TOLERANCE: f64 = 1e-9;

const QUADRATURE_ORDER: usize = 10;
/// Gaussian kernels are integrated out to this many widths.
const KERNEL_CUTOFF: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionAxis {
    Detector,
    AtomCenterOfMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PartitionSpec {
    Uniform(usize),
    Boundaries(Vec<f64>),
}

/// Contiguous, disjoint batches covering an extent. Batch `a` is
/// `[b_a, b_{a+1})`; the last batch also contains its right end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPartition {
    axis: PartitionAxis,
    boundaries: Vec<f64>,
}

impl BatchPartition {
    pub fn axis(&self) -> PartitionAxis {
        self.axis
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn n_batches(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.boundaries[0], *self.boundaries.last().expect("at least two boundaries"))
    }

    pub fn interval(&self, a: usize) -> (f64, f64) {
        (self.boundaries[a], self.boundaries[a + 1])
    }

    pub fn intervals(&self) -> impl ExactSizeIterator<Item = (f64, f64)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }

    /// Batch containing `x`, if any.
    pub fn batch_of(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.extent();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let n = self.n_batches();
        Some(self.boundaries[1..n].partition_point(|b| *b <= x))
    }

    /// Merge batch `a` with batch `a + 1`.
    pub fn merged(&self, a: usize) -> Result<Self> {
        if a + 1 >= self.n_batches() {
            return Err(Error::Argument(format!("cannot merge batch {a} with its successor")));
        }
        let mut boundaries = self.boundaries.clone();
        boundaries.remove(a + 1);
        Ok(Self { axis: self.axis, boundaries })
    }
}

pub fn partition_batches(
    extent: (f64, f64),
    spec: &PartitionSpec,
    axis: PartitionAxis,
) -> Result<BatchPartition> {
    let (lo, hi) = extent;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Argument(format!("empty extent [{lo}, {hi}]")));
    }
    let boundaries = match spec {
        PartitionSpec::Uniform(n) => {
            if *n == 0 {
                return Err(Error::Argument("batch count must be at least 1".into()));
            }
            let width = (hi - lo) / *n as f64;
            let mut b: Vec<f64> = (0..*n).map(|i| lo + i as f64 * width).collect();
            b.push(hi);
            b
        }
        PartitionSpec::Boundaries(b) => {
            if b.len() < 2 {
                return Err(Error::Argument("need at least two boundaries".into()));
            }
            if let Some(w) = b.windows(2).find(|w| !(w[1] > w[0])) {
                return Err(Error::Argument(format!(
                    "boundaries must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
            if b[0] != lo || b[b.len() - 1] != hi {
                return Err(Error::Argument(format!(
                    "boundaries [{}, {}] do not cover the extent [{lo}, {hi}]",
                    b[0],
                    b[b.len() - 1]
                )));
            }
            b.clone()
        }
    };
    Ok(BatchPartition { axis, boundaries })
}

/// Correlated capture kernel `k(x_obj, x_det)`, in 1/time per unit
/// detector length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaptureKernel {
    /// `g exp(-(x - u)² / 2λ²)`
    Gaussian { g: f64, lambda: f64 },
    /// `g` for `|x - u| ≤ half_width`, else 0.
    Window { g: f64, half_width: f64 },
}

impl CaptureKernel {
    pub fn validate(&self) -> Result<()> {
        let (g, width) = match *self {
            CaptureKernel::Gaussian { g, lambda } => (g, lambda),
            CaptureKernel::Window { g, half_width } => (g, half_width),
        };
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::Argument(format!("kernel strength must be ≥ 0, got {g}")));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Argument(format!("kernel width must be > 0, got {width}")));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, u: f64) -> f64 {
        match *self {
            CaptureKernel::Gaussian { g, lambda } => {
                let d = (x - u) / lambda;
                g * (-0.5 * d * d).exp()
            }
            CaptureKernel::Window { g, half_width } => {
                if (x - u).abs() <= half_width {
                    g
                } else {
                    0.0
                }
            }
        }
    }

    /// Detector interval outside which `k(x, ·)` is negligible (Gaussian)
    /// or zero (window).
    fn support(&self, x: f64) -> (f64, f64) {
        match *self {
            CaptureKernel::Gaussian { lambda, .. } => (x - KERNEL_CUTOFF * lambda, x + KERNEL_CUTOFF * lambda),
            CaptureKernel::Window { half_width, .. } => (x - half_width, x + half_width),
        }
    }

    fn smooth_scale(&self) -> Option<f64> {
        match *self {
            CaptureKernel::Gaussian { lambda, .. } => Some(lambda),
            CaptureKernel::Window { .. } => None,
        }
    }

    /// Largest value of `∫ k(x, u) w(u) du` for `w ≤ 1`.
    pub fn max_integral(&self) -> f64 {
        match *self {
            CaptureKernel::Gaussian { g, lambda } => g * lambda * (2.0 * std::f64::consts::PI).sqrt(),
            CaptureKernel::Window { g, half_width } => 2.0 * g * half_width,
        }
    }
}

/// Configuration density `w(u)` of the detector (or atom) coordinate.
/// Values are relative weights with peak 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigurationDensity {
    Uniform,
    Gaussian { center: f64, sigma: f64 },
}

impl ConfigurationDensity {
    pub fn validate(&self) -> Result<()> {
        if let ConfigurationDensity::Gaussian { center, sigma } = *self {
            if !(center.is_finite() && sigma.is_finite() && sigma > 0.0) {
                return Err(Error::Argument(format!(
                    "detector density needs finite center and sigma > 0 (got {center}, {sigma})"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            ConfigurationDensity::Uniform => 1.0,
            ConfigurationDensity::Gaussian { center, sigma } => {
                let d = (u - center) / sigma;
                (-0.5 * d * d).exp()
            }
        }
    }

    fn smooth_scale(&self) -> Option<f64> {
        match *self {
            ConfigurationDensity::Uniform => None,
            ConfigurationDensity::Gaussian { sigma, .. } => Some(sigma),
        }
    }
}

/// One rate density per batch, plus the inputs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchChannelSet {
    pub partition: BatchPartition,
    pub kernel: Option<CaptureKernel>,
    pub density: Option<ConfigurationDensity>,
    grid: Grid1D,
    gammas: Vec<Vec<f64>>,
}

impl BatchChannelSet {
    pub fn gammas(&self) -> &[Vec<f64>] {
        &self.gammas
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Pointwise sum of all batch rate densities.
    pub fn total_gamma(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.grid.len()];
        for gamma in &self.gammas {
            for (t, g) in total.iter_mut().zip(gamma) {
                *t += g;
            }
        }
        total
    }

    /// Capture channels fed by `source`, one per batch, targeting
    /// `targets[a]`.
    pub fn channels(&self, source: ComponentId, targets: &[ComponentId]) -> Result<Vec<CaptureChannel>> {
        if targets.len() != self.gammas.len() {
            return Err(Error::Structural(format!(
                "{} targets for {} batches",
                targets.len(),
                self.gammas.len()
            )));
        }
        self.gammas
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(a, (gamma, target))| {
                CaptureChannel::new(source, *target, self.grid, gamma.clone(), format!("batch {a}"))
            })
            .collect()
    }
}

fn integrator(kernel: &CaptureKernel, density: &ConfigurationDensity) -> Composite {
    let scale = [kernel.smooth_scale(), density.smooth_scale()]
        .into_iter()
        .flatten()
        .fold(1.0_f64, f64::min);
    Composite::new(QUADRATURE_ORDER, 0.5 * scale)
}

fn kernel_integral(
    q: &Composite,
    kernel: &CaptureKernel,
    density: &ConfigurationDensity,
    x: f64,
    (lo, hi): (f64, f64),
) -> f64 {
    let (s_lo, s_hi) = kernel.support(x);
    q.integrate(lo.max(s_lo), hi.min(s_hi), |u| kernel.eval(x, u) * density.eval(u))
}

/// Integrate the kernel over each batch for every object grid point, and
/// verify that the batches sum to the full-extent integral.
pub fn build_batch_channels(
    partition: &BatchPartition,
    kernel: &CaptureKernel,
    density: &ConfigurationDensity,
    grid: &Grid1D,
) -> Result<BatchChannelSet> {
    kernel.validate()?;
    density.validate()?;
    let q = integrator(kernel, density);
    let extent = partition.extent();
    if !(q.integrate(extent.0, extent.1, |u| density.eval(u)) > 0.0) {
        return Err(Error::Argument("detector density has no mass on the extent".into()));
    }

    let points: Vec<f64> = grid.points().collect();
    let gammas: Vec<Vec<f64>> = partition
        .intervals()
        .map(|interval| {
            points
                .iter()
                .map(|&x| kernel_integral(&q, kernel, density, x, interval))
                .collect()
        })
        .collect();

    let full: Vec<f64> = points
        .iter()
        .map(|&x| kernel_integral(&q, kernel, density, x, extent))
        .collect();
    let scale = full.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for (i, f) in full.iter().enumerate() {
        let sum: f64 = gammas.iter().map(|g| g[i]).sum();
        if (sum - f).abs() > PARTITION_OF_UNITY_TOLERANCE * scale {
            return Err(Error::Numerical(format!(
                "batch rates do not sum to the full-extent rate at x = {} ({sum} vs {f})",
                points[i]
            )));
        }
    }

    Ok(BatchChannelSet {
        partition: partition.clone(),
        kernel: Some(*kernel),
        density: Some(*density),
        grid: *grid,
        gammas,
    })
}

/// Uniform rate `rate` restricted to each batch, on the object grid itself
/// (the batches partition the object coordinate).
pub fn build_restricted_channels(partition: &BatchPartition, rate: f64, grid: &Grid1D) -> Result<BatchChannelSet> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::Argument(format!("rate must be ≥ 0, got {rate}")));
    }
    let mut gammas = vec![vec![0.0; grid.len()]; partition.n_batches()];
    for (i, x) in grid.points().enumerate() {
        if let Some(a) = partition.batch_of(x) {
            gammas[a][i] = rate;
        }
    }
    Ok(BatchChannelSet {
        partition: partition.clone(),
        kernel: None,
        density: None,
        grid: *grid,
        gammas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_three_batches() {
        let p = partition_batches((0.0, 3.0), &PartitionSpec::Uniform(3), PartitionAxis::Detector).unwrap();
        assert_eq!(p.boundaries(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.n_batches(), 3);
    }

    #[test]
    fn single_batch() {
        let p = partition_batches((0.0, 3.0), &PartitionSpec::Uniform(1), PartitionAxis::Detector).unwrap();
        assert_eq!(p.n_batches(), 1);
        assert_eq!(p.batch_of(3.0), Some(0));
    }

    #[test]
    fn bad_partitions() {
        let axis = PartitionAxis::Detector;
        assert!(partition_batches((0.0, 3.0), &PartitionSpec::Boundaries(vec![0.0, 2.0, 1.0, 3.0]), axis).is_err());
        assert!(partition_batches((0.0, 3.0), &PartitionSpec::Boundaries(vec![0.0, 1.0, 1.0, 3.0]), axis).is_err());
        assert!(partition_batches((1.0, 1.0), &PartitionSpec::Uniform(2), axis).is_err());
        assert!(partition_batches((0.0, 3.0), &PartitionSpec::Uniform(0), axis).is_err());
        assert!(partition_batches((0.0, 3.0), &PartitionSpec::Boundaries(vec![0.0, 2.0]), axis).is_err());
    }

    #[test]
    fn batch_membership_is_half_open() {
        let p = partition_batches((0.0, 3.0), &PartitionSpec::Uniform(3), PartitionAxis::Detector).unwrap();
        assert_eq!(p.batch_of(0.0), Some(0));
        assert_eq!(p.batch_of(0.999), Some(0));
        assert_eq!(p.batch_of(1.0), Some(1));
        assert_eq!(p.batch_of(2.5), Some(2));
        assert_eq!(p.batch_of(3.0), Some(2));
        assert_eq!(p.batch_of(3.01), None);
        assert_eq!(p.batch_of(-0.01), None);
    }

    #[test]
    fn uniform_kernel_and_density_give_equal_gammas() {
        let grid = Grid1D::new(-20.0, 23.0, 431).unwrap();
        let p = partition_batches((0.0, 3.0), &PartitionSpec::Uniform(3), PartitionAxis::Detector).unwrap();
        // a kernel wide enough to be flat across the whole extent
        let kernel = CaptureKernel::Window { g: 0.5, half_width: 100.0 };
        let set = build_batch_channels(&p, &kernel, &ConfigurationDensity::Uniform, &grid).unwrap();
        for i in 0..grid.len() {
            let g = &set.gammas();
            assert!((g[0][i] - 0.5).abs() < 1e-12);
            assert!((g[1][i] - 0.5).abs() < 1e-12);
            assert!((g[2][i] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_kernel_rejected() {
        let grid = Grid1D::new(-5.0, 5.0, 101).unwrap();
        let p = partition_batches((0.0, 3.0), &PartitionSpec::Uniform(3), PartitionAxis::Detector).unwrap();
        let kernel = CaptureKernel::Gaussian { g: -1.0, lambda: 0.3 };
        assert!(build_batch_channels(&p, &kernel, &ConfigurationDensity::Uniform, &grid).is_err());
    }

    #[test]
    fn merge_adjacent() {
        let p = partition_batches((0.0, 3.0), &PartitionSpec::Uniform(3), PartitionAxis::Detector).unwrap();
        assert_eq!(p.merged(1).unwrap().boundaries(), &[0.0, 1.0, 3.0]);
        assert!(p.merged(2).is_err());
    }
}
