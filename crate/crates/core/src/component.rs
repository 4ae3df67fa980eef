//! Universal-state data model: realized and ready components.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::GridWavefunction;

/// Relative tolerance for `s` against the recomputed sum of squared norms.
pub const NORM_LEDGER_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentId(pub u64);

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    Realized,
    /// Created by an irreversible interaction; eligible for the stochastic
    /// trigger and frozen until chosen.
    Ready,
}

/// Camera branch in the two-branch configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    A,
    B,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::A => "A",
            Branch::B => "B",
        })
    }
}

/// Discrete tags carried by a component.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub crystal: Option<usize>,
    pub branch: Option<Branch>,
    pub batch: Option<usize>,
    /// Emitted-photon tag for scattering batches.
    pub photon: Option<usize>,
    /// Lab-frame interval of the window or batch that feeds this component.
    pub interval: Option<(f64, f64)>,
}

impl Labels {
    pub fn crystal(n: usize) -> Self {
        Self { crystal: Some(n), ..Self::default() }
    }

    pub fn batch(a: usize) -> Self {
        Self { batch: Some(a), ..Self::default() }
    }

    pub fn with_interval(mut self, lo: f64, hi: f64) -> Self {
        self.interval = Some((lo, hi));
        self
    }
}

impl fmt::Display for Labels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(b) = self.branch {
            parts.push(format!("branch={b}"));
        }
        if let Some(n) = self.crystal {
            parts.push(format!("crystal={n}"));
        }
        if let Some(a) = self.batch {
            parts.push(format!("batch={a}"));
        }
        if let Some(p) = self.photon {
            parts.push(format!("photon={p}"));
        }
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: ComponentId,
    pub kind: ComponentKind,
    pub labels: Labels,
    /// Spatial factor. For a ready component this holds the captured
    /// content: amplitude `sqrt(accumulated density)` with frozen phase.
    pub psi: GridWavefunction,
    pub born_at: f64,
    /// Capture-weighted view `sqrt(Γ) ψ` of the realized branch, refreshed
    /// on every inflow. Collapse launches from it.
    pub snapshot: Option<GridWavefunction>,
}

impl Component {
    pub fn realized(id: ComponentId, psi: GridWavefunction, born_at: f64) -> Self {
        Self {
            id,
            kind: ComponentKind::Realized,
            labels: Labels::default(),
            psi,
            born_at,
            snapshot: None,
        }
    }

    /// A component that has not yet been tagged; scenario builders call
    /// [`mark_ready`] on it.
    pub fn candidate(id: ComponentId, labels: Labels, psi: GridWavefunction, born_at: f64) -> Self {
        Self {
            id,
            kind: ComponentKind::Realized,
            labels,
            psi,
            born_at,
            snapshot: None,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.norm_sqr()
    }

    pub fn is_ready(&self) -> bool {
        self.kind == ComponentKind::Ready
    }
}

/// All components of the universe plus the clock and the tracked total
/// square modulus `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniverseState {
    pub components: Vec<Component>,
    pub t: f64,
    pub s: f64,
}

impl UniverseState {
    /// State holding a single realized component.
    pub fn new(realized: Component, t: f64) -> Self {
        let s = realized.norm_sqr();
        Self { components: vec![realized], t, s }
    }

    pub fn push(&mut self, component: Component) -> Result<()> {
        if self.get(component.id).is_some() {
            return Err(Error::Structural(format!("duplicate component id {}", component.id)));
        }
        self.s += component.norm_sqr();
        self.components.push(component);
        Ok(())
    }

    pub fn get(&self, id: ComponentId) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn get_mut(&mut self, id: ComponentId) -> Option<&mut Component> {
        self.components.iter_mut().find(|c| c.id == id)
    }

    pub fn index_of(&self, id: ComponentId) -> Result<usize> {
        self.components
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::Structural(format!("unknown component id {id}")))
    }

    pub fn realized(&self) -> Result<&Component> {
        let mut it = self.components.iter().filter(|c| c.kind == ComponentKind::Realized);
        match (it.next(), it.next()) {
            (Some(c), None) => Ok(c),
            (None, _) => Err(Error::InvariantViolation("no realized component".into())),
            (Some(_), Some(_)) => Err(Error::InvariantViolation(
                "more than one realized component".into(),
            )),
        }
    }

    pub fn realized_index(&self) -> Result<usize> {
        let id = self.realized()?.id;
        self.index_of(id)
    }

    pub fn ready(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.is_ready())
    }

    pub fn next_id(&self) -> ComponentId {
        ComponentId(self.components.iter().map(|c| c.id.0 + 1).max().unwrap_or(0))
    }

    /// Checks the kind partition, id uniqueness, finiteness, and the
    /// norm ledger.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.components {
            if !seen.insert(c.id) {
                return Err(Error::InvariantViolation(format!("duplicate component id {}", c.id)));
            }
            c.psi.check_finite()?;
        }
        self.realized()?;
        let sum = total_square_modulus(self);
        if !sum.is_finite() {
            return Err(Error::Numerical("total square modulus is not finite".into()));
        }
        let scale = sum.abs().max(self.s.abs()).max(f64::MIN_POSITIVE);
        if (sum - self.s).abs() / scale > NORM_LEDGER_TOLERANCE {
            return Err(Error::InvariantViolation(format!(
                "norm ledger drift: tracked s = {}, sum of components = {sum}",
                self.s
            )));
        }
        Ok(())
    }
}

/// `s = Σ‖ψ_i‖²` over every component.
pub fn total_square_modulus(state: &UniverseState) -> f64 {
    state.components.iter().map(Component::norm_sqr).sum()
}

/// Tag a freshly constructed component as ready. Its squared norm must be
/// exactly zero at the marking time.
pub fn mark_ready(mut state: UniverseState, id: ComponentId) -> Result<UniverseState> {
    let idx = state.index_of(id)?;
    let component = &mut state.components[idx];
    let norm = component.norm_sqr();
    if norm != 0.0 {
        return Err(Error::InvariantViolation(format!(
            "component {id} has squared norm {norm}; ready components are born empty"
        )));
    }
    component.kind = ComponentKind::Ready;
    component.born_at = state.t;
    Ok(state)
}
