//! Crank–Nicolson propagation on a uniform grid.
//!
//! The kinetic term is the three-point Laplacian, so `(1 + i dt H / 2)` is
//! tridiagonal (cyclic under periodic boundaries) and each step costs one
//! Thomas sweep. Factorizations are cached per `(H, dt)` in [`Propagator`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{Grid1D, GridWavefunction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Hard walls just outside the grid (ψ = 0 beyond the endpoints).
    #[default]
    Reflecting,
    Periodic,
}

/// `H = -∇²/(2m) + V(x)` with ħ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian1D {
    grid: Grid1D,
    potential: Vec<f64>,
    mass: f64,
    boundary: Boundary,
}

impl Hamiltonian1D {
    pub fn new(grid: Grid1D, potential: Vec<f64>, mass: f64, boundary: Boundary) -> Result<Self> {
        if potential.len() != grid.len() {
            return Err(Error::Structural(format!(
                "potential has {} samples for a {}-point grid",
                potential.len(),
                grid.len()
            )));
        }
        if let Some(i) = potential.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("potential is not finite at index {i}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Argument(format!("mass must be positive, got {mass}")));
        }
        Ok(Self { grid, potential, mass, boundary })
    }

    pub fn free(grid: Grid1D, mass: f64, boundary: Boundary) -> Result<Self> {
        Self::new(grid, vec![0.0; grid.len()], mass, boundary)
    }

    pub fn harmonic(grid: Grid1D, mass: f64, omega: f64) -> Result<Self> {
        let potential = grid.points().map(|x| 0.5 * mass * omega * omega * x * x).collect();
        Self::new(grid, potential, mass, Boundary::Reflecting)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    fn off_diagonal(&self) -> f64 {
        let dx = self.grid.dx();
        -0.5 / (self.mass * dx * dx)
    }

    fn diagonal(&self, i: usize) -> f64 {
        -2.0 * self.off_diagonal() + self.potential[i]
    }
}

/// Factorized Thomas sweep for a tridiagonal system with constant
/// off-diagonal `off` and diagonal `diag`.
#[derive(Debug, Clone)]
struct Thomas {
    off: Complex64,
    c_prime: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
}

impl Thomas {
    fn new(diag: &[Complex64], off: Complex64) -> Result<Self> {
        let n = diag.len();
        let mut c_prime = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];
        let mut prev_c = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let pivot = diag[i] - off * prev_c;
            if pivot.norm() < 1e-300 {
                return Err(Error::Numerical("singular Crank-Nicolson matrix".into()));
            }
            inv_pivot[i] = pivot.inv();
            c_prime[i] = off * inv_pivot[i];
            prev_c = c_prime[i];
        }
        Ok(Self { off, c_prime, inv_pivot })
    }

    fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        let mut prev = Complex64::new(0.0, 0.0);
        for (r, p) in rhs.iter_mut().zip(&self.inv_pivot) {
            *r = (*r - self.off * prev) * p;
            prev = *r;
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.c_prime[i] * next;
        }
    }
}

#[derive(Debug, Clone)]
enum Solver {
    Tridiagonal(Thomas),
    /// Sherman–Morrison correction for the two corner elements.
    Cyclic {
        thomas: Thomas,
        z: Vec<Complex64>,
        v_last: Complex64,
        denom: Complex64,
    },
}

/// Cached Crank–Nicolson stepper for one Hamiltonian and one `dt`.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Grid1D,
    dt: f64,
    /// diagonal of `1 - i dt H / 2`
    rhs_diag: Vec<Complex64>,
    /// off-diagonal of `1 - i dt H / 2`
    rhs_off: Complex64,
    boundary: Boundary,
    solver: Solver,
    scratch: Vec<Complex64>,
}

impl Propagator {
    pub fn new(h: &Hamiltonian1D, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        let n = h.grid.len();
        let half = Complex64::new(0.0, 0.5 * dt);
        let off = h.off_diagonal();
        let lhs_off = half * off;
        let lhs_diag: Vec<Complex64> = (0..n).map(|i| 1.0 + half * h.diagonal(i)).collect();
        let rhs_diag = (0..n).map(|i| 1.0 - half * h.diagonal(i)).collect();

        let solver = match h.boundary {
            Boundary::Reflecting => Solver::Tridiagonal(Thomas::new(&lhs_diag, lhs_off)?),
            Boundary::Periodic => {
                let gamma = -lhs_diag[0];
                let mut diag = lhs_diag.clone();
                diag[0] -= gamma;
                diag[n - 1] -= lhs_off * lhs_off / gamma;
                let thomas = Thomas::new(&diag, lhs_off)?;
                let mut z = vec![Complex64::new(0.0, 0.0); n];
                z[0] = gamma;
                z[n - 1] = lhs_off;
                thomas.solve_in_place(&mut z);
                let v_last = lhs_off / gamma;
                let denom = 1.0 + z[0] + v_last * z[n - 1];
                Solver::Cyclic { thomas, z, v_last, denom }
            }
        };

        Ok(Self {
            grid: h.grid,
            dt,
            rhs_diag,
            rhs_off: -lhs_off,
            boundary: h.boundary,
            solver,
            scratch: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `psi` by one step in place.
    pub fn step(&mut self, psi: &mut GridWavefunction) -> Result<()> {
        psi.same_grid(&self.grid)?;
        psi.check_finite()?;
        let amps = psi.amps_mut();
        let n = amps.len();
        let rhs = &mut self.scratch;
        for i in 0..n {
            let left = if i > 0 {
                amps[i - 1]
            } else if self.boundary == Boundary::Periodic {
                amps[n - 1]
            } else {
                Complex64::new(0.0, 0.0)
            };
            let right = if i + 1 < n {
                amps[i + 1]
            } else if self.boundary == Boundary::Periodic {
                amps[0]
            } else {
                Complex64::new(0.0, 0.0)
            };
            rhs[i] = self.rhs_diag[i] * amps[i] + self.rhs_off * (left + right);
        }
        match &self.solver {
            Solver::Tridiagonal(thomas) => thomas.solve_in_place(rhs),
            Solver::Cyclic { thomas, z, v_last, denom } => {
                thomas.solve_in_place(rhs);
                let factor = (rhs[0] + v_last * rhs[n - 1]) / denom;
                for (r, zi) in rhs.iter_mut().zip(z) {
                    *r -= factor * zi;
                }
            }
        }
        amps.copy_from_slice(rhs);
        psi.check_finite()
    }
}

/// One Crank–Nicolson step of `psi` under `h`. `dt = 0` returns the input.
pub fn step_unitary(psi: &GridWavefunction, h: &Hamiltonian1D, dt: f64) -> Result<GridWavefunction> {
    psi.check_finite()?;
    if dt == 0.0 {
        return Ok(psi.clone());
    }
    let mut next = psi.clone();
    Propagator::new(h, dt)?.step(&mut next)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dt_is_identity() {
        let g = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let psi = GridWavefunction::gaussian(g, 1.0, 1.0, 0.7).unwrap();
        let h = Hamiltonian1D::free(g, 1.0, Boundary::Reflecting).unwrap();
        assert_eq!(step_unitary(&psi, &h, 0.0).unwrap(), psi);
    }

    #[test]
    fn negative_dt_rejected() {
        let g = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let psi = GridWavefunction::gaussian(g, 0.0, 1.0, 0.0).unwrap();
        let h = Hamiltonian1D::free(g, 1.0, Boundary::Reflecting).unwrap();
        assert!(matches!(step_unitary(&psi, &h, -0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn periodic_packet_wraps_around() {
        let g = Grid1D::new(-10.0, 10.0, 400).unwrap();
        let h = Hamiltonian1D::free(g, 1.0, Boundary::Periodic).unwrap();
        let mut psi = GridWavefunction::gaussian(g, 8.0, 0.7, 3.0).unwrap();
        let mut prop = Propagator::new(&h, 0.005).unwrap();
        for _ in 0..200 {
            prop.step(&mut psi).unwrap();
        }
        // moved 3 units right from x = 8: now centred near x = -9
        let peak = psi
            .density()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| g.x(i))
            .unwrap();
        assert!((peak + 9.0).abs() < 0.5, "peak at {peak}");
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn grid_mismatch() {
        let g = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let other = Grid1D::new(-10.0, 10.0, 301).unwrap();
        let h = Hamiltonian1D::free(g, 1.0, Boundary::Reflecting).unwrap();
        let mut psi = GridWavefunction::gaussian(other, 0.0, 1.0, 0.0).unwrap();
        assert!(Propagator::new(&h, 0.1).unwrap().step(&mut psi).is_err());
    }
}
