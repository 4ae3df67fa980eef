//! Scenario builders: the free-spreading baseline, the localized camera,
//! the two-branch camera, the continuously uncertain camera with decoherent
//! batches, and the scattering atom.
//!
//! The photon is not simulated. Its only role is the irreversible capture,
//! which is absorbed into each channel's rate density.

use serde::{Deserialize, Serialize};

use crate::component::{mark_ready, Branch, Component, ComponentId, Labels, UniverseState};
use crate::decoherence::{
    build_batch_channels, build_restricted_channels, partition_batches, BatchChannelSet,
    CaptureKernel, ConfigurationDensity, PartitionAxis, PartitionSpec,
};
use crate::error::{ConfigIssue, Error, Result};
use crate::wave::{Boundary, CaptureChannel, Grid1D, GridWavefunction, Hamiltonian1D, STEP_HAZARD_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Baseline,
    Case1,
    Case2,
    Case3,
    Scattering,
}

impl CaseId {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseId::Baseline => "baseline",
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
            CaseId::Scattering => "scattering",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "baseline" => CaseId::Baseline,
            "case1" => CaseId::Case1,
            "case2" => CaseId::Case2,
            "case3" => CaseId::Case3,
            "scattering" => CaseId::Scattering,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_min: -20.0, x_max: 20.0, dx: 0.04 }
    }
}

/// Initial Gaussian state of the object (or atom).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub center: f64,
    pub sigma: f64,
    pub momentum: f64,
    pub mass: f64,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self { center: 0.0, sigma: 1.0, momentum: 0.0, mass: 1.0 }
    }
}

/// Crystal windows fixed in the lab frame, each with capture rate `rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case1Config {
    pub windows: Vec<(f64, f64)>,
    pub rate: f64,
}

impl Default for Case1Config {
    fn default() -> Self {
        Self { windows: vec![(1.0, 2.0)], rate: 0.5 }
    }
}

/// Two superposed camera branches; branch B's crystals are branch A's
/// shifted by `offset_b - offset_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case2Config {
    pub windows: Vec<(f64, f64)>,
    pub rate: f64,
    pub offset_a: f64,
    pub offset_b: f64,
    pub weight_a: f64,
    pub weight_b: f64,
}

impl Default for Case2Config {
    fn default() -> Self {
        Self {
            windows: vec![(-1.0, 0.0), (0.0, 1.0)],
            rate: 0.5,
            offset_a: 0.0,
            offset_b: 0.5,
            weight_a: 0.5,
            weight_b: 0.5,
        }
    }
}

/// Camera line with uncertain position, split into decoherent batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case3Config {
    pub extent: (f64, f64),
    pub partition: PartitionSpec,
    pub kernel: CaptureKernel,
    pub detector: ConfigurationDensity,
}

impl Default for Case3Config {
    fn default() -> Self {
        Self {
            extent: (-3.0, 3.0),
            partition: PartitionSpec::Uniform(3),
            kernel: CaptureKernel::Gaussian { g: 0.5, lambda: 0.25 },
            detector: ConfigurationDensity::Gaussian { center: 0.0, sigma: 1.5 },
        }
    }
}

/// Spread atom whose extent breaks into decoherent batches, each emitting
/// at rate `rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    pub extent: (f64, f64),
    pub partition: PartitionSpec,
    pub rate: f64,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        Self { extent: (-4.0, 4.0), partition: PartitionSpec::Uniform(4), rate: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CaseSetup {
    Baseline,
    Case1(Case1Config),
    Case2(Case2Config),
    Case3(Case3Config),
    Scattering(ScatteringConfig),
}

impl CaseSetup {
    pub fn id(&self) -> CaseId {
        match self {
            CaseSetup::Baseline => CaseId::Baseline,
            CaseSetup::Case1(_) => CaseId::Case1,
            CaseSetup::Case2(_) => CaseId::Case2,
            CaseSetup::Case3(_) => CaseId::Case3,
            CaseSetup::Scattering(_) => CaseId::Scattering,
        }
    }

    pub fn default_for(id: CaseId) -> Self {
        match id {
            CaseId::Baseline => CaseSetup::Baseline,
            CaseId::Case1 => CaseSetup::Case1(Case1Config::default()),
            CaseId::Case2 => CaseSetup::Case2(Case2Config::default()),
            CaseId::Case3 => CaseSetup::Case3(Case3Config::default()),
            CaseId::Scattering => CaseSetup::Scattering(ScatteringConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub setup: CaseSetup,
    pub grid: GridConfig,
    pub object: ObjectConfig,
    pub boundary: Boundary,
    pub t_max: f64,
    pub dt: f64,
    /// Collapse generations per trajectory; after each collapse the ready
    /// set is re-armed until this many reductions have happened.
    pub generations: usize,
}

impl ScenarioConfig {
    pub fn new(setup: CaseSetup) -> Self {
        Self {
            setup,
            grid: GridConfig::default(),
            object: ObjectConfig::default(),
            boundary: Boundary::Reflecting,
            t_max: 10.0,
            dt: 0.01,
            generations: 1,
        }
    }

    /// Default desk-scale configuration for `id`.
    pub fn default_for(id: CaseId) -> Self {
        Self::new(CaseSetup::default_for(id))
    }

    pub fn case_id(&self) -> CaseId {
        self.setup.id()
    }

    /// Upper bound on `max_x Σ_n Γ_n(x)`; since `J/s ≤ max Σ Γ`, `dt` times
    /// this bounds the total hazard of any step.
    pub fn max_total_rate(&self) -> f64 {
        match &self.setup {
            CaseSetup::Baseline => 0.0,
            CaseSetup::Case1(c) => c.rate,
            CaseSetup::Case2(c) => c.rate * (c.weight_a + c.weight_b),
            CaseSetup::Case3(c) => {
                let peak = match c.kernel {
                    CaptureKernel::Gaussian { g, .. } | CaptureKernel::Window { g, .. } => g,
                };
                c.kernel.max_integral().min(peak * (c.extent.1 - c.extent.0).abs())
            }
            CaseSetup::Scattering(c) => c.rate,
        }
    }

    /// Multiply every capture rate by `factor`.
    pub fn scale_rates(&mut self, factor: f64) {
        match &mut self.setup {
            CaseSetup::Baseline => {}
            CaseSetup::Case1(c) => c.rate *= factor,
            CaseSetup::Case2(c) => c.rate *= factor,
            CaseSetup::Case3(c) => match &mut c.kernel {
                CaptureKernel::Gaussian { g, .. } | CaptureKernel::Window { g, .. } => *g *= factor,
            },
            CaseSetup::Scattering(c) => c.rate *= factor,
        }
    }

    /// Every validation problem, not just the first.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, message: String| issues.push(ConfigIssue { key: key.into(), message });

        let g = &self.grid;
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_max > g.x_min) {
            bad("grid.x_max", format!("must exceed grid.x_min ({} vs {})", g.x_max, g.x_min));
        } else if !(g.dx > 0.0 && g.dx.is_finite()) {
            bad("grid.dx", format!("must be > 0, got {}", g.dx));
        } else if Grid1D::with_spacing(g.x_min, g.x_max, g.dx).is_err() {
            bad("grid.dx", format!("too coarse: fewer than {} points", crate::wave::MIN_GRID_POINTS));
        }
        let o = &self.object;
        if !(o.sigma > 0.0 && o.sigma.is_finite()) {
            bad("object.sigma", format!("must be > 0, got {}", o.sigma));
        }
        if !(o.mass > 0.0 && o.mass.is_finite()) {
            bad("object.mass", format!("must be > 0, got {}", o.mass));
        }
        if !(o.center.is_finite() && o.momentum.is_finite()) {
            bad("object.center", "center and momentum must be finite".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad("dt", format!("must be > 0, got {}", self.dt));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            bad("t_max", format!("must be > 0, got {}", self.t_max));
        }
        if self.generations == 0 {
            bad("generations", "must be at least 1".into());
        }

        let check_rate = |key: &str, rate: f64, bad: &mut dyn FnMut(&str, String)| {
            if !(rate >= 0.0 && rate.is_finite()) {
                bad(key, format!("rates must be ≥ 0, got {rate}"));
            }
        };
        let check_windows = |key: &str, windows: &[(f64, f64)], bad: &mut dyn FnMut(&str, String)| {
            if windows.is_empty() {
                bad(key, "at least one crystal window is required".into());
            }
            for (i, (lo, hi)) in windows.iter().enumerate() {
                if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                    bad(&format!("{key}[{i}]"), format!("window [{lo}, {hi}] is empty"));
                }
            }
            let mut sorted = windows.to_vec();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in sorted.windows(2) {
                if w[1].0 < w[0].1 {
                    bad(key, format!("windows [{}, {}] and [{}, {}] overlap", w[0].0, w[0].1, w[1].0, w[1].1));
                }
            }
        };
        let check_extent = |key: &str, extent: (f64, f64), spec: &PartitionSpec, bad: &mut dyn FnMut(&str, String)| {
            if let Err(e) = partition_batches(extent, spec, PartitionAxis::Detector) {
                bad(key, e.to_string());
            }
        };

        match &self.setup {
            CaseSetup::Baseline => {}
            CaseSetup::Case1(c) => {
                check_rate("case1.rate", c.rate, &mut bad);
                check_windows("case1.windows", &c.windows, &mut bad);
            }
            CaseSetup::Case2(c) => {
                check_rate("case2.rate", c.rate, &mut bad);
                check_windows("case2.windows", &c.windows, &mut bad);
                if !(c.weight_a >= 0.0 && c.weight_b >= 0.0 && ((c.weight_a + c.weight_b) - 1.0).abs() < 1e-9) {
                    bad(
                        "case2.weight_a",
                        format!("branch weights must be ≥ 0 and sum to 1 (got {} + {})", c.weight_a, c.weight_b),
                    );
                }
                if !(c.offset_a.is_finite() && c.offset_b.is_finite()) {
                    bad("case2.offset_a", "branch offsets must be finite".into());
                }
            }
            CaseSetup::Case3(c) => {
                check_extent("case3.extent", c.extent, &c.partition, &mut bad);
                if let Err(e) = c.kernel.validate() {
                    bad("case3.kernel", e.to_string());
                }
                if let Err(e) = c.detector.validate() {
                    bad("case3.detector", e.to_string());
                }
            }
            CaseSetup::Scattering(c) => {
                check_rate("scattering.rate", c.rate, &mut bad);
                check_extent("scattering.extent", c.extent, &c.partition, &mut bad);
            }
        }

        let bound = self.max_total_rate() * self.dt;
        if bound > STEP_HAZARD_LIMIT {
            bad(
                "dt",
                format!(
                    "dt = {} with maximum total rate {} violates the guard: total hazard per step ≤ {STEP_HAZARD_LIMIT} (got {bound})",
                    self.dt,
                    self.max_total_rate()
                ),
            );
        }
        issues
    }
}

/// One ready component to create at shutter-open (or after a collapse when
/// re-arming), with the rate density of the channel that feeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadyArm {
    pub labels: Labels,
    pub gamma: Vec<f64>,
    pub label: String,
}

/// An assembled scenario: Hamiltonian, initial realized state, and the
/// ready set with its capture channels.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: Grid1D,
    pub hamiltonian: Hamiltonian1D,
    pub initial: GridWavefunction,
    pub arms: Vec<ReadyArm>,
}

impl Scenario {
    pub fn id(&self) -> &'static str {
        self.config.case_id().as_str()
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn t_max(&self) -> f64 {
        self.config.t_max
    }

    /// Number of engine steps to reach `t_max`.
    pub fn n_steps(&self) -> usize {
        (self.config.t_max / self.config.dt - 1e-9).ceil() as usize
    }

    /// Same dynamics with every channel removed.
    pub fn baseline(&self) -> Scenario {
        Scenario { arms: Vec::new(), ..self.clone() }
    }

    /// Initial universe state at `t = 0` with the ready set armed.
    pub fn initial_state(&self) -> Result<(UniverseState, Vec<CaptureChannel>)> {
        let mut state = UniverseState::new(Component::realized(ComponentId(0), self.initial.clone(), 0.0), 0.0);
        let channels = self.arm(&mut state)?;
        Ok((state, channels))
    }

    /// Add a fresh, empty ready component per arm, fed by the current
    /// realized component.
    pub fn arm(&self, state: &mut UniverseState) -> Result<Vec<CaptureChannel>> {
        let source = state.realized()?.id;
        let mut channels = Vec::with_capacity(self.arms.len());
        for arm in &self.arms {
            let id = state.next_id();
            state.push(Component::candidate(id, arm.labels.clone(), GridWavefunction::zeros(self.grid), state.t))?;
            *state = mark_ready(std::mem::replace(state, placeholder()), id)?;
            channels.push(CaptureChannel::new(source, id, self.grid, arm.gamma.clone(), arm.label.clone())?);
        }
        Ok(channels)
    }
}

fn placeholder() -> UniverseState {
    UniverseState { components: Vec::new(), t: 0.0, s: 0.0 }
}

fn common(cfg: &ScenarioConfig) -> Result<(Grid1D, Hamiltonian1D, GridWavefunction)> {
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let grid = Grid1D::with_spacing(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.dx)?;
    let h = Hamiltonian1D::free(grid, cfg.object.mass, cfg.boundary)?;
    let psi = GridWavefunction::gaussian(grid, cfg.object.center, cfg.object.sigma, cfg.object.momentum)?;
    Ok((grid, h, psi))
}

fn expect_case(cfg: &ScenarioConfig, id: CaseId) -> Result<()> {
    if cfg.case_id() != id {
        return Err(Error::Argument(format!(
            "configuration is for {}, not {}",
            cfg.case_id().as_str(),
            id.as_str()
        )));
    }
    Ok(())
}

fn window_gamma(grid: &Grid1D, (lo, hi): (f64, f64), rate: f64) -> Vec<f64> {
    grid.points().map(|x| if x >= lo && x < hi { rate } else { 0.0 }).collect()
}

fn assemble(cfg: &ScenarioConfig, arms: Vec<ReadyArm>) -> Result<Scenario> {
    let (grid, hamiltonian, initial) = common(cfg)?;
    Ok(Scenario { config: cfg.clone(), grid, hamiltonian, initial, arms })
}

/// Free spreading with no capture channels.
pub fn build_baseline(cfg: &ScenarioConfig) -> Result<Scenario> {
    let mut scenario = build(cfg)?;
    scenario.arms.clear();
    Ok(scenario)
}

/// Localized camera: one ready component per crystal window.
pub fn build_case1(cfg: &ScenarioConfig) -> Result<Scenario> {
    expect_case(cfg, CaseId::Case1)?;
    let (grid, _, _) = common(cfg)?;
    let CaseSetup::Case1(c) = &cfg.setup else { unreachable!() };
    let arms = c
        .windows
        .iter()
        .enumerate()
        .map(|(n, &w)| ReadyArm {
            labels: Labels::crystal(n).with_interval(w.0, w.1),
            gamma: window_gamma(&grid, w, c.rate),
            label: format!("crystal {n}"),
        })
        .collect();
    assemble(cfg, arms)
}

/// Two camera branches with `N` crystals each; gammas are branch-offset
/// copies scaled by the branch weight.
pub fn build_case2(cfg: &ScenarioConfig) -> Result<Scenario> {
    expect_case(cfg, CaseId::Case2)?;
    let (grid, _, _) = common(cfg)?;
    let CaseSetup::Case2(c) = &cfg.setup else { unreachable!() };
    let mut arms = Vec::with_capacity(2 * c.windows.len());
    for (branch, offset, weight) in [(Branch::A, c.offset_a, c.weight_a), (Branch::B, c.offset_b, c.weight_b)] {
        for (n, &(lo, hi)) in c.windows.iter().enumerate() {
            let w = (lo + offset, hi + offset);
            arms.push(ReadyArm {
                labels: Labels { branch: Some(branch), ..Labels::crystal(n).with_interval(w.0, w.1) },
                gamma: window_gamma(&grid, w, weight * c.rate),
                label: format!("branch {branch} crystal {n}"),
            });
        }
    }
    assemble(cfg, arms)
}

/// The batch channel set a case-3 configuration produces.
pub fn case3_channel_set(cfg: &ScenarioConfig) -> Result<BatchChannelSet> {
    expect_case(cfg, CaseId::Case3)?;
    let (grid, _, _) = common(cfg)?;
    let CaseSetup::Case3(c) = &cfg.setup else { unreachable!() };
    let partition = partition_batches(c.extent, &c.partition, PartitionAxis::Detector)?;
    build_batch_channels(&partition, &c.kernel, &c.detector, &grid)
}

/// Continuously uncertain camera: one ready component per decoherent batch.
pub fn build_case3(cfg: &ScenarioConfig) -> Result<Scenario> {
    let set = case3_channel_set(cfg)?;
    let arms = batch_arms(&set, false);
    assemble(cfg, arms)
}

/// Spread atom: batch `a` emits at the configured rate over its own
/// interval only.
pub fn build_scattering(cfg: &ScenarioConfig) -> Result<Scenario> {
    expect_case(cfg, CaseId::Scattering)?;
    let (grid, _, _) = common(cfg)?;
    let CaseSetup::Scattering(c) = &cfg.setup else { unreachable!() };
    let partition = partition_batches(c.extent, &c.partition, PartitionAxis::AtomCenterOfMass)?;
    let set = build_restricted_channels(&partition, c.rate, &grid)?;
    assemble(cfg, batch_arms(&set, true))
}

fn batch_arms(set: &BatchChannelSet, photon: bool) -> Vec<ReadyArm> {
    set.gammas()
        .iter()
        .zip(set.partition.intervals())
        .enumerate()
        .map(|(a, (gamma, (lo, hi)))| ReadyArm {
            labels: Labels {
                photon: photon.then_some(a),
                ..Labels::batch(a).with_interval(lo, hi)
            },
            gamma: gamma.clone(),
            label: format!("batch {a}"),
        })
        .collect()
}

/// Dispatch on the configured case.
pub fn build(cfg: &ScenarioConfig) -> Result<Scenario> {
    match cfg.case_id() {
        CaseId::Baseline => assemble(cfg, Vec::new()),
        CaseId::Case1 => build_case1(cfg),
        CaseId::Case2 => build_case2(cfg),
        CaseId::Case3 => build_case3(cfg),
        CaseId::Scattering => build_scattering(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::assert_freeze;

    #[test]
    fn defaults_validate() {
        for id in [CaseId::Baseline, CaseId::Case1, CaseId::Case2, CaseId::Case3, CaseId::Scattering] {
            let cfg = ScenarioConfig::default_for(id);
            assert!(cfg.validate().is_empty(), "{id:?}: {:?}", cfg.validate());
            let scenario = build(&cfg).unwrap();
            let (state, channels) = scenario.initial_state().unwrap();
            state.check_invariants().unwrap();
            assert!(assert_freeze(&state, &channels, None).is_empty());
            assert_eq!(scenario.grid.len(), 1001);
        }
    }

    #[test]
    fn overlapping_windows_rejected() {
        let mut cfg = ScenarioConfig::default_for(CaseId::Case1);
        cfg.setup = CaseSetup::Case1(Case1Config { windows: vec![(1.0, 2.0), (1.5, 3.0)], rate: 0.5 });
        assert!(matches!(build_case1(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn validation_collects_every_issue() {
        let mut cfg = ScenarioConfig::default_for(CaseId::Case1);
        cfg.object.sigma = -1.0;
        cfg.dt = 1.0;
        cfg.setup = CaseSetup::Case1(Case1Config { windows: vec![(2.0, 1.0)], rate: -0.5 });
        let keys: Vec<String> = cfg.validate().into_iter().map(|i| i.key).collect();
        assert!(keys.contains(&"object.sigma".to_string()));
        assert!(keys.contains(&"case1.rate".to_string()));
        assert!(keys.contains(&"case1.windows[0]".to_string()));
        let mut cfg = ScenarioConfig::default_for(CaseId::Case1);
        cfg.dt = 1.0;
        let issues = cfg.validate();
        assert_eq!(issues.len(), 1);
        assert!(issues[0].message.contains("total hazard per step ≤ 0.1"));
    }

    #[test]
    fn case2_labels_and_weights() {
        let mut cfg = ScenarioConfig::default_for(CaseId::Case2);
        if let CaseSetup::Case2(c) = &mut cfg.setup {
            c.weight_a = 0.8;
            c.weight_b = 0.2;
        }
        let s = build_case2(&cfg).unwrap();
        assert_eq!(s.arms.len(), 4);
        let max_a = s.arms[0].gamma.iter().copied().fold(0.0, f64::max);
        let max_b = s.arms[2].gamma.iter().copied().fold(0.0, f64::max);
        assert!((max_a - 0.4).abs() < 1e-15 && (max_b - 0.1).abs() < 1e-15);
        assert_eq!(s.arms[3].labels.branch, Some(Branch::B));
        assert_eq!(s.arms[3].labels.crystal, Some(1));
    }

    #[test]
    fn wrong_builder_for_case() {
        let cfg = ScenarioConfig::default_for(CaseId::Case1);
        assert!(build_scattering(&cfg).is_err());
    }
}
