use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_GRID_POINTS: usize = 8;

/// Uniform 1-D grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::Argument("grid bounds must be finite".into()));
        }
        if n_points < MIN_GRID_POINTS {
            return Err(Error::Argument(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {n_points}"
            )));
        }
        if x_max <= x_min {
            return Err(Error::Argument(format!(
                "grid extent is empty: x_min = {x_min}, x_max = {x_max}"
            )));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    /// Grid whose spacing is as close as possible to `dx` without exceeding it.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::Argument(format!("dx must be positive, got {dx}")));
        }
        let intervals = ((x_max - x_min) / dx - 1e-9).ceil().max(1.0) as usize;
        Self::new(x_min, x_max, intervals + 1)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..self.n_points).map(move |i| self.x_min + i as f64 * dx)
    }
}

/// Complex amplitude field on a [`Grid1D`]. The squared norm is
/// `Σ |ψ_i|² dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    grid: Grid1D,
    amps: Vec<Complex64>,
}

impl GridWavefunction {
    pub fn new(grid: Grid1D, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != grid.len() {
            return Err(Error::Structural(format!(
                "{} amplitudes for a {}-point grid",
                amps.len(),
                grid.len()
            )));
        }
        let psi = Self { grid, amps };
        psi.check_finite()?;
        Ok(psi)
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            amps: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let amps = grid.points().map(f).collect();
        Self::new(grid, amps)
    }

    /// Normalized Gaussian packet with position variance `sigma²` and mean
    /// momentum `momentum` (ħ = 1).
    pub fn gaussian(grid: Grid1D, center: f64, sigma: f64, momentum: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
        }
        let mut psi = Self::from_fn(grid, |x| {
            let d = x - center;
            Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), momentum * x)
        })?;
        psi.normalize()?;
        Ok(psi)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.amps.iter().position(|a| !(a.re.is_finite() && a.im.is_finite())) {
            Some(i) => Err(Error::Numerical(format!(
                "non-finite amplitude at grid index {i}"
            ))),
            None => Ok(()),
        }
    }

    /// Pointwise density |ψ|².
    pub fn density(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.amps.iter().map(|a| a.norm_sqr())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.density().sum::<f64>() * self.grid.dx()
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    /// Rescale to unit squared norm.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::UndefinedMetric(format!(
                "cannot normalize a state with squared norm {n}"
            )));
        }
        self.scale(1.0 / n.sqrt());
        Ok(())
    }

    pub fn same_grid(&self, other: &Grid1D) -> Result<()> {
        if &self.grid != other {
            return Err(Error::Structural(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other
            )));
        }
        Ok(())
    }

    /// Mean and variance of position under the normalized density.
    pub fn position_moments(&self) -> Result<(f64, f64)> {
        let total: f64 = self.density().sum();
        if !(total > 0.0) {
            return Err(Error::UndefinedMetric(
                "position variance of a zero-norm state".into(),
            ));
        }
        let mean = self
            .density()
            .zip(self.grid.points())
            .map(|(p, x)| p * x)
            .sum::<f64>()
            / total;
        let var = self
            .density()
            .zip(self.grid.points())
            .map(|(p, x)| p * (x - mean) * (x - mean))
            .sum::<f64>()
            / total;
        Ok((mean, var))
    }
}

/// Var(x) under the normalized density |ψ|² dx.
pub fn position_variance(psi: &GridWavefunction) -> Result<f64> {
    psi.position_moments().map(|(_, var)| var)
}
