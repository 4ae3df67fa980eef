//! Strict TOML scenario configuration.
//!
//! ```toml
//! case = "case1"          # baseline | case1 | case2 | case3 | scattering
//! t_max = 10.0
//! dt = 0.01
//! generations = 1
//! boundary = "reflecting" # or "periodic"
//!
//! [grid]
//! x_min = -20.0
//! x_max = 20.0
//! dx = 0.04
//!
//! [object]
//! center = 0.0
//! sigma = 1.0
//! momentum = 0.0
//! mass = 1.0
//!
//! [case1]
//! windows = [[1.0, 2.0]]
//! rate = 0.5
//! ```
//!
//! Every key is optional except `case`; omitted keys take the defaults of
//! [`ScenarioConfig::default_for`]. Unknown keys are errors.

use std::path::Path;

use toml::{Table, Value};

use crate::decoherence::{CaptureKernel, ConfigurationDensity, PartitionSpec};
use crate::error::{ConfigIssue, Error, Result};
use crate::scenario::{CaseId, CaseSetup, ScenarioConfig};
use crate::wave::Boundary;

const TOP_KEYS: &[&str] = &[
    "case", "t_max", "dt", "generations", "boundary", "grid", "object", "case1", "case2", "case3", "scattering",
];

struct Reader {
    issues: Vec<ConfigIssue>,
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Reader {
    fn issue(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue { key: key.into(), message: message.into() });
    }

    fn allow(&mut self, table: &Table, prefix: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.issue(join(prefix, key), format!("unknown key (allowed: {})", allowed.join(", ")));
            }
        }
    }

    fn float(&mut self, table: &Table, prefix: &str, key: &str, target: &mut f64) {
        if let Some(v) = table.get(key) {
            match as_f64(v) {
                Some(x) => *target = x,
                None => self.issue(join(prefix, key), format!("expected a number, got {}", v.type_str())),
            }
        }
    }

    fn pair(&mut self, v: &Value, path: &str) -> Option<(f64, f64)> {
        match v.as_array().map(|a| a.iter().map(as_f64).collect::<Option<Vec<_>>>()) {
            Some(Some(xs)) if xs.len() == 2 => Some((xs[0], xs[1])),
            _ => {
                self.issue(path, "expected a pair of numbers [lo, hi]");
                None
            }
        }
    }

    fn pairs(&mut self, table: &Table, prefix: &str, key: &str, target: &mut Vec<(f64, f64)>) {
        let Some(v) = table.get(key) else { return };
        let path = join(prefix, key);
        let Some(items) = v.as_array() else {
            self.issue(path, "expected a list of [lo, hi] pairs");
            return;
        };
        let parsed: Vec<Option<(f64, f64)>> =
            items.iter().enumerate().map(|(i, item)| self.pair(item, &format!("{path}[{i}]"))).collect();
        if let Some(all) = parsed.into_iter().collect::<Option<Vec<_>>>() {
            *target = all;
        }
    }

    fn sub<'a>(&mut self, table: &'a Table, prefix: &str, key: &str) -> Option<&'a Table> {
        let v = table.get(key)?;
        match v.as_table() {
            Some(t) => Some(t),
            None => {
                self.issue(join(prefix, key), format!("expected a table, got {}", v.type_str()));
                None
            }
        }
    }

    fn partition(&mut self, table: &Table, prefix: &str, target: &mut PartitionSpec) {
        match (table.get("batches"), table.get("boundaries")) {
            (Some(_), Some(_)) => self.issue(join(prefix, "batches"), "give either batches or boundaries, not both"),
            (Some(v), None) => match v.as_integer() {
                Some(n) if n >= 1 => *target = PartitionSpec::Uniform(n as usize),
                _ => self.issue(join(prefix, "batches"), "expected an integer ≥ 1"),
            },
            (None, Some(v)) => match v.as_array().map(|a| a.iter().map(as_f64).collect::<Option<Vec<_>>>()) {
                Some(Some(b)) => *target = PartitionSpec::Boundaries(b),
                _ => self.issue(join(prefix, "boundaries"), "expected a list of numbers"),
            },
            (None, None) => {}
        }
    }

    fn extent(&mut self, table: &Table, prefix: &str, target: &mut (f64, f64)) {
        if let Some(v) = table.get("extent") {
            if let Some(p) = self.pair(v, &join(prefix, "extent")) {
                *target = p;
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Parse and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        Error::Config(vec![ConfigIssue { key: "<file>".into(), message: e.to_string().trim().to_string() }])
    })?;
    parse_config_table(&table)
}

/// Build a configuration from a parsed table, reporting every problem.
pub fn parse_config_table(table: &Table) -> Result<ScenarioConfig> {
    let mut r = Reader { issues: Vec::new() };
    r.allow(table, "", TOP_KEYS);

    let id = match table.get("case") {
        None => {
            r.issue("case", "missing required key");
            None
        }
        Some(v) => match v.as_str().and_then(CaseId::parse) {
            Some(id) => Some(id),
            None => {
                r.issue("case", "expected one of baseline, case1, case2, case3, scattering");
                None
            }
        },
    };
    let mut cfg = ScenarioConfig::default_for(id.unwrap_or(CaseId::Baseline));

    r.float(table, "", "t_max", &mut cfg.t_max);
    r.float(table, "", "dt", &mut cfg.dt);
    if let Some(v) = table.get("generations") {
        match v.as_integer() {
            Some(n) if n >= 1 => cfg.generations = n as usize,
            _ => r.issue("generations", "expected an integer ≥ 1"),
        }
    }
    if let Some(v) = table.get("boundary") {
        match v.as_str() {
            Some("reflecting") => cfg.boundary = Boundary::Reflecting,
            Some("periodic") => cfg.boundary = Boundary::Periodic,
            _ => r.issue("boundary", "expected \"reflecting\" or \"periodic\""),
        }
    }
    if let Some(g) = r.sub(table, "", "grid") {
        r.allow(g, "grid", &["x_min", "x_max", "dx"]);
        r.float(g, "grid", "x_min", &mut cfg.grid.x_min);
        r.float(g, "grid", "x_max", &mut cfg.grid.x_max);
        r.float(g, "grid", "dx", &mut cfg.grid.dx);
    }
    if let Some(o) = r.sub(table, "", "object") {
        r.allow(o, "object", &["center", "sigma", "momentum", "mass"]);
        r.float(o, "object", "center", &mut cfg.object.center);
        r.float(o, "object", "sigma", &mut cfg.object.sigma);
        r.float(o, "object", "momentum", &mut cfg.object.momentum);
        r.float(o, "object", "mass", &mut cfg.object.mass);
    }

    for section in ["case1", "case2", "case3", "scattering"] {
        if table.contains_key(section) && id.is_some_and(|id| id.as_str() != section) {
            r.issue(section, format!("section does not apply to case \"{}\"", id.unwrap().as_str()));
        }
    }

    match &mut cfg.setup {
        CaseSetup::Baseline => {}
        CaseSetup::Case1(c) => {
            if let Some(t) = r.sub(table, "", "case1") {
                r.allow(t, "case1", &["windows", "rate"]);
                r.pairs(t, "case1", "windows", &mut c.windows);
                r.float(t, "case1", "rate", &mut c.rate);
            }
        }
        CaseSetup::Case2(c) => {
            if let Some(t) = r.sub(table, "", "case2") {
                r.allow(t, "case2", &["windows", "rate", "offset_a", "offset_b", "weight_a", "weight_b"]);
                r.pairs(t, "case2", "windows", &mut c.windows);
                r.float(t, "case2", "rate", &mut c.rate);
                r.float(t, "case2", "offset_a", &mut c.offset_a);
                r.float(t, "case2", "offset_b", &mut c.offset_b);
                r.float(t, "case2", "weight_a", &mut c.weight_a);
                r.float(t, "case2", "weight_b", &mut c.weight_b);
            }
        }
        CaseSetup::Case3(c) => {
            if let Some(t) = r.sub(table, "", "case3") {
                r.allow(t, "case3", &["extent", "batches", "boundaries", "kernel", "detector"]);
                r.extent(t, "case3", &mut c.extent);
                r.partition(t, "case3", &mut c.partition);
                if let Some(k) = r.sub(t, "case3", "kernel") {
                    c.kernel = read_kernel(&mut r, k, c.kernel);
                }
                if let Some(d) = r.sub(t, "case3", "detector") {
                    c.detector = read_detector(&mut r, d, c.detector);
                }
            }
        }
        CaseSetup::Scattering(c) => {
            if let Some(t) = r.sub(table, "", "scattering") {
                r.allow(t, "scattering", &["extent", "batches", "boundaries", "rate"]);
                r.extent(t, "scattering", &mut c.extent);
                r.partition(t, "scattering", &mut c.partition);
                r.float(t, "scattering", "rate", &mut c.rate);
            }
        }
    }

    let mut issues = r.issues;
    if id.is_some() {
        // values that failed to parse kept their defaults; skip their keys
        let extra: Vec<ConfigIssue> = cfg.validate().into_iter().filter(|v| !issues.iter().any(|i| i.key == v.key)).collect();
        issues.extend(extra);
    }
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(issues))
    }
}

fn read_kernel(r: &mut Reader, t: &Table, current: CaptureKernel) -> CaptureKernel {
    let p = "case3.kernel";
    let kind = t.get("kind").and_then(Value::as_str).unwrap_or(match current {
        CaptureKernel::Gaussian { .. } => "gaussian",
        CaptureKernel::Window { .. } => "window",
    });
    match kind {
        "gaussian" => {
            r.allow(t, p, &["kind", "g", "lambda"]);
            let (mut g, mut lambda) = match current {
                CaptureKernel::Gaussian { g, lambda } => (g, lambda),
                _ => (0.5, 0.25),
            };
            r.float(t, p, "g", &mut g);
            r.float(t, p, "lambda", &mut lambda);
            CaptureKernel::Gaussian { g, lambda }
        }
        "window" => {
            r.allow(t, p, &["kind", "g", "half_width"]);
            let (mut g, mut half_width) = match current {
                CaptureKernel::Window { g, half_width } => (g, half_width),
                _ => (0.5, 0.25),
            };
            r.float(t, p, "g", &mut g);
            r.float(t, p, "half_width", &mut half_width);
            CaptureKernel::Window { g, half_width }
        }
        other => {
            r.issue(format!("{p}.kind"), format!("unknown kernel \"{other}\" (gaussian or window)"));
            current
        }
    }
}

fn read_detector(r: &mut Reader, t: &Table, current: ConfigurationDensity) -> ConfigurationDensity {
    let p = "case3.detector";
    let kind = t.get("kind").and_then(Value::as_str).unwrap_or(match current {
        ConfigurationDensity::Uniform => "uniform",
        ConfigurationDensity::Gaussian { .. } => "gaussian",
    });
    match kind {
        "uniform" => {
            r.allow(t, p, &["kind"]);
            ConfigurationDensity::Uniform
        }
        "gaussian" => {
            r.allow(t, p, &["kind", "center", "sigma"]);
            let (mut center, mut sigma) = match current {
                ConfigurationDensity::Gaussian { center, sigma } => (center, sigma),
                _ => (0.0, 1.5),
            };
            r.float(t, p, "center", &mut center);
            r.float(t, p, "sigma", &mut sigma);
            ConfigurationDensity::Gaussian { center, sigma }
        }
        other => {
            r.issue(format!("{p}.kind"), format!("unknown density \"{other}\" (uniform or gaussian)"));
            current
        }
    }
}

/// Set the value at a dotted key path, creating intermediate tables.
pub fn set_key(table: &mut Table, path: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Argument(format!("empty key path '{path}'")))?;
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Argument(format!("'{part}' in '{path}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parse a command-line value as TOML, falling back to a bare string.
pub fn parse_value(text: &str) -> Value {
    format!("v = {text}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}
