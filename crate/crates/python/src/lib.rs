//! Python bindings: configs, scenarios, trajectories, ensembles, oracles.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use nrules::analysis::{self, EnsembleOptions, EnsembleResult, PrecollapsePath, RunOptions};
use nrules::io;
use nrules::reduction::{RngStream, StepChecks};
use nrules::scenario::{self, CaseId, Scenario, ScenarioConfig};
use nrules::wave::{position_variance, Boundary, Grid1D, GridWavefunction, Hamiltonian1D, Propagator};

fn err(e: nrules::Error) -> PyErr {
    match e {
        nrules::Error::Config(_) | nrules::Error::Argument(_) => PyValueError::new_err(e.to_string()),
        nrules::Error::Io(_) => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// A validated scenario configuration with the table it came from.
#[pyclass(name = "ScenarioConfig", frozen, skip_from_py_object, module = "nrules_py")]
#[derive(Clone)]
struct PyScenarioConfig {
    table: toml::Table,
    cfg: ScenarioConfig,
}

impl PyScenarioConfig {
    fn from_table(table: toml::Table) -> PyResult<Self> {
        let cfg = io::parse_config_table(&table).map_err(err)?;
        Ok(Self { table, cfg })
    }
}

#[pymethods]
impl PyScenarioConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| PyValueError::new_err(e.to_string()))?;
        Self::from_table(table)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Documented defaults for `case`.
    #[staticmethod]
    fn default(case: &str) -> PyResult<Self> {
        let mut table = toml::Table::new();
        table.insert("case".into(), toml::Value::String(case.into()));
        Self::from_table(table)
    }

    /// Copy with one dotted key set, e.g. `with_value("case1.rate", "1.5")`.
    fn with_value(&self, key: &str, value: &str) -> PyResult<Self> {
        let mut table = self.table.clone();
        io::set_key(&mut table, key, io::parse_value(value)).map_err(err)?;
        Self::from_table(table)
    }

    #[getter]
    fn case(&self) -> &'static str {
        self.cfg.case_id().as_str()
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.cfg.t_max
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.cfg.dt
    }

    #[getter]
    fn generations(&self) -> usize {
        self.cfg.generations
    }

    fn max_total_rate(&self) -> f64 {
        self.cfg.max_total_rate()
    }

    fn canonical(&self) -> PyResult<String> {
        io::canonical_config(&self.table).map_err(err)
    }

    fn hash(&self) -> PyResult<String> {
        io::config_hash(&self.table).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("ScenarioConfig(case={:?}, t_max={}, dt={})", self.case(), self.cfg.t_max, self.cfg.dt)
    }
}

#[pyclass(name = "Scenario", frozen, module = "nrules_py")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    fn new(config: &PyScenarioConfig) -> PyResult<Self> {
        Ok(Self { inner: scenario::build(&config.cfg).map_err(err)? })
    }

    /// Same grid, object and time axis with no channels.
    fn baseline(&self) -> Self {
        Self { inner: self.inner.baseline() }
    }

    #[getter]
    fn id(&self) -> &'static str {
        self.inner.id()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.t_max()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps()
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.arms.len()
    }

    fn grid_points(&self) -> Vec<f64> {
        self.inner.grid.points().collect()
    }

    fn initial_density(&self) -> Vec<f64> {
        self.inner.initial.density().collect()
    }

    fn initial_variance(&self) -> PyResult<f64> {
        position_variance(&self.inner.initial).map_err(err)
    }

    /// The shared deterministic evolution before any collapse:
    /// `t`, `variance`, `s` per step and `hazards[n][step]`.
    fn precollapse<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let path = py.detach(|| PrecollapsePath::compute(&self.inner, StepChecks { enabled: false })).map_err(err)?;
        let n = path.n_channels();
        let dict = PyDict::new(py);
        dict.set_item("t", path.steps.iter().map(|s| s.t).collect::<Vec<_>>())?;
        dict.set_item("variance", path.steps.iter().map(|s| s.variance).collect::<Vec<_>>())?;
        dict.set_item("s", path.steps.iter().map(|s| s.s).collect::<Vec<_>>())?;
        let hazards: Vec<Vec<f64>> = (0..n).map(|c| path.steps.iter().map(|s| s.hazards[c]).collect()).collect();
        dict.set_item("hazards", hazards)?;
        Ok(dict)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(id={:?}, n_channels={}, n_steps={})", self.id(), self.n_channels(), self.n_steps())
    }
}

#[pyclass(name = "EnsembleResult", frozen, module = "nrules_py")]
struct PyEnsembleResult {
    inner: EnsembleResult,
}

#[pymethods]
impl PyEnsembleResult {
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.inner.summary)
    }

    /// The exact line written to `summary.jsonl`.
    fn summary_json(&self) -> PyResult<String> {
        io::to_json_line(&self.inner.summary).map_err(err)
    }

    fn variance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.inner.variance)
    }

    /// First-generation events of every trajectory, in stream order.
    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let events: Vec<_> = self.inner.records.iter().filter_map(|r| r.first_event()).collect();
        serialize(py, &events)
    }

    fn record<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyAny>> {
        let rec = self
            .inner
            .records
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("no record {index}")))?;
        serialize(py, rec)
    }

    fn failures<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.inner.failures)
    }

    /// Write the results files (not the manifest) into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<Vec<String>> {
        io::write_results(&dir, &self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

#[pyfunction]
#[pyo3(signature = (scenario, seed, stream, checks = false))]
fn run_trajectory<'py>(py: Python<'py>, scenario: &PyScenario, seed: u64, stream: u64, checks: bool) -> PyResult<Bound<'py, PyAny>> {
    let opts = RunOptions { checks: StepChecks { enabled: checks }, ..RunOptions::default() };
    let rec = py
        .detach(|| analysis::run_trajectory(&scenario.inner, &mut RngStream::new(seed, stream), opts))
        .map_err(err)?;
    serialize(py, &rec)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (scenario, n_traj, seed, ks = false, series = 0, checks = false, shuffle = None))]
fn run_ensemble(
    py: Python<'_>,
    scenario: &PyScenario,
    n_traj: usize,
    seed: u64,
    ks: bool,
    series: usize,
    checks: bool,
    shuffle: Option<u64>,
) -> PyResult<PyEnsembleResult> {
    let opts = EnsembleOptions {
        n_traj,
        seed,
        checks: StepChecks { enabled: checks },
        keep_series: series,
        ks_oracle: ks,
        shuffle,
        ..Default::default()
    };
    let inner = py.detach(|| analysis::run_ensemble(&scenario.inner, &opts)).map_err(err)?;
    Ok(PyEnsembleResult { inner })
}

/// Quadrature first-hit CDFs, sampled every `stride` oracle steps.
#[pyfunction]
#[pyo3(signature = (scenario, stride = analysis::ORACLE_REFINEMENT))]
fn oracle_first_hit_cdf<'py>(py: Python<'py>, scenario: &PyScenario, stride: usize) -> PyResult<Bound<'py, PyDict>> {
    let table = py.detach(|| analysis::oracle_first_hit_cdf(&scenario.inner)).map_err(err)?;
    let stride = stride.max(1);
    let pick = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
    let dict = PyDict::new(py);
    dict.set_item("t", pick(&table.t))?;
    let total: Vec<f64> = table.t.iter().step_by(stride).map(|&t| table.total_cdf(t)).collect();
    dict.set_item("total_cdf", total)?;
    dict.set_item("hazard", table.hazard.iter().map(|h| pick(h)).collect::<Vec<_>>())?;
    dict.set_item("channel_cdf", table.channel_cdf.iter().map(|c| pick(c)).collect::<Vec<_>>())?;
    dict.set_item("hit_fractions", table.hit_fractions())?;
    Ok(dict)
}

#[pyfunction]
fn localization_report<'py>(py: Python<'py>, ensemble: &PyEnsembleResult, baseline: &PyEnsembleResult) -> PyResult<Bound<'py, PyAny>> {
    let report = analysis::localization_report(&ensemble.inner.variance, &baseline.inner.variance).map_err(err)?;
    serialize(py, &report)
}

/// Variance of a Gaussian packet after free evolution for `t`, on a grid.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (sigma, t, dt = 0.01, mass = 1.0, x_min = -20.0, x_max = 20.0, dx = 0.04))]
fn free_variance(py: Python<'_>, sigma: f64, t: f64, dt: f64, mass: f64, x_min: f64, x_max: f64, dx: f64) -> PyResult<f64> {
    py.detach(|| {
        let grid = Grid1D::with_spacing(x_min, x_max, dx)?;
        let mut psi = GridWavefunction::gaussian(grid, 0.0, sigma, 0.0)?;
        let mut prop = Propagator::new(&Hamiltonian1D::free(grid, mass, Boundary::Reflecting)?, dt)?;
        for _ in 0..(t / dt).round() as usize {
            prop.step(&mut psi)?;
        }
        position_variance(&psi)
    })
    .map_err(err)
}

#[pyfunction]
fn selftest() -> Vec<(String, bool, String)> {
    analysis::selftest::run_all()
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pyfunction]
fn cases() -> Vec<&'static str> {
    [CaseId::Baseline, CaseId::Case1, CaseId::Case2, CaseId::Case3, CaseId::Scattering]
        .iter()
        .map(|c| c.as_str())
        .collect()
}

#[pymodule]
fn nrules_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", nrules::ENGINE_VERSION)?;
    m.add_class::<PyScenarioConfig>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyEnsembleResult>()?;
    m.add_function(wrap_pyfunction!(run_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_first_hit_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(localization_report, m)?)?;
    m.add_function(wrap_pyfunction!(free_variance, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_function(wrap_pyfunction!(cases, m)?)?;
    Ok(())
}
