//! Results directory layout:
//!
//! - `manifest`: run metadata (JSON)
//! - `summary.jsonl`: one ensemble summary per line
//! - `variance.csv`: mean variance against time
//! - `events.csv`: first-generation collapse events, one per row
//! - `failures.jsonl`: failed trajectories, if any
//! - `series/<traj-id>.csv`: per-trajectory series
//!
//! Floats are written with 17 significant digits (`{:.16e}`); NaN is
//! written as `null` in JSON and `nan` in CSV.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analysis::{EnsembleResult, EnsembleSummary, TrajectoryRecord, VarianceTable};
use crate::error::{Error, Result};
use crate::scenario::GridConfig;

/// Environment variable that overrides the results root.
pub const RESULTS_ROOT_ENV: &str = "NRULES_RESULTS_ROOT";

/// Resolve `dir` against the results root, if one is set and `dir` is
/// relative.
pub fn results_dir(dir: &Path) -> PathBuf {
    match std::env::var_os(RESULTS_ROOT_ENV) {
        Some(root) if dir.is_relative() && !root.is_empty() => Path::new(&root).join(dir),
        _ => dir.to_path_buf(),
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_json(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("f64 number");
                out.push_str(&format!("{x:.16e}"));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_json(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push(':');
                write_json(out, item);
            }
            out.push('}');
        }
    }
}

/// Single-line JSON with struct field order kept and 17-digit floats.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Numerical(format!("serialization failed: {e}")))?;
    let mut out = String::new();
    write_json(&mut out, &v);
    Ok(out)
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Canonical text of a configuration table: keys sorted at every level,
/// compact JSON with 17-digit floats.
pub fn canonical_config(table: &toml::Table) -> Result<String> {
    let v = serde_json::to_value(table).map_err(|e| Error::Argument(format!("config not representable: {e}")))?;
    let mut out = String::new();
    write_json(&mut out, &sort_keys(v));
    Ok(out)
}

/// SHA-256 of the canonical configuration, hex encoded.
pub fn config_hash(table: &toml::Table) -> Result<String> {
    let digest = Sha256::digest(canonical_config(table)?.as_bytes());
    Ok(digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub engine_version: String,
    pub command: String,
    pub seed: u64,
    pub n_traj: usize,
    pub scenario: String,
    pub grid: GridConfig,
    pub dt: f64,
    pub t_max: f64,
    /// Canonical configuration the run was built from.
    pub config: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<String>,
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn series_csv(record: &TrajectoryRecord) -> String {
    let n = record.series.first().map_or(0, |r| r.hazards.len());
    let mut out = String::from("t,variance,s");
    for i in 1..=n {
        let _ = write!(out, ",H_{i}");
    }
    out.push('\n');
    for row in &record.series {
        out.push_str(&format_float(row.t));
        for x in [row.variance, row.s].iter().chain(&row.hazards) {
            out.push(',');
            out.push_str(&format_float(*x));
        }
        out.push('\n');
    }
    out
}

pub fn variance_csv(table: &VarianceTable) -> String {
    let mut out = String::from("t,mean_variance,collapsed_fraction,mean_post_variance,baseline_variance\n");
    for i in 0..table.t.len() {
        let cols = [
            table.t[i],
            table.mean_variance[i],
            table.collapsed_fraction[i],
            table.mean_post_variance[i],
            table.baseline_variance[i],
        ];
        out.push_str(&cols.map(format_float).join(","));
        out.push('\n');
    }
    out
}

fn events_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::from("stream,channel,t_sc,t_state,pre_variance,post_variance\n");
    for r in records {
        if let Some(e) = r.first_event() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.stream,
                e.channel,
                format_float(e.t_sc),
                format_float(e.t_state),
                format_float(e.pre_variance),
                format_float(e.post_variance)
            );
        }
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::File::create(&path)?.write_all(contents.as_bytes())?;
    files.push(name.to_string());
    Ok(())
}

/// Write every result file of one ensemble except the manifest; returns
/// the relative file names written.
pub fn write_results(dir: &Path, result: &EnsembleResult) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    write_file(dir, "summary.jsonl", &(to_json_line(&result.summary)? + "\n"), &mut files)?;
    write_file(dir, "variance.csv", &variance_csv(&result.variance), &mut files)?;
    write_file(dir, "events.csv", &events_csv(&result.records), &mut files)?;
    if !result.failures.is_empty() {
        let mut text = String::new();
        for f in &result.failures {
            text.push_str(&to_json_line(f)?);
            text.push('\n');
        }
        write_file(dir, "failures.jsonl", &text, &mut files)?;
    }
    for record in result.records.iter().filter(|r| !r.series.is_empty()) {
        write_file(dir, &format!("series/{:06}.csv", record.stream), &series_csv(record), &mut files)?;
    }
    Ok(files)
}

/// Append summaries as JSON lines.
pub fn write_summaries(path: &Path, summaries: &[EnsembleSummary]) -> Result<()> {
    let mut text = String::new();
    for s in summaries {
        text.push_str(&to_json_line(s)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(dir.join("manifest"), text + "\n")?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(dir.join("manifest"))?;
    serde_json::from_str(&text).map_err(|e| Error::Argument(format!("{}: bad manifest: {e}", dir.display())))
}

fn parse_csv_float(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// Read a results directory's variance table, with its grid and time axis
/// from the manifest.
pub fn read_variance_table(dir: &Path) -> Result<VarianceTable> {
    let manifest = read_manifest(dir)?;
    let path = dir.join("variance.csv");
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "t,mean_variance,collapsed_fraction,mean_post_variance,baseline_variance" {
        return Err(Error::Argument(format!("{}: unexpected header '{header}'", path.display())));
    }
    let mut table = VarianceTable {
        scenario: manifest.scenario,
        grid: manifest.grid,
        dt: manifest.dt,
        t_max: manifest.t_max,
        t: Vec::new(),
        mean_variance: Vec::new(),
        collapsed_fraction: Vec::new(),
        mean_post_variance: Vec::new(),
        baseline_variance: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let cols: Option<Vec<f64>> = line.split(',').map(parse_csv_float).collect();
        let cols = cols
            .filter(|c| c.len() == 5)
            .ok_or_else(|| Error::Argument(format!("{}: bad row {}", path.display(), i + 2)))?;
        table.t.push(cols[0]);
        table.mean_variance.push(cols[1]);
        table.collapsed_fraction.push(cols[2]);
        table.mean_post_variance.push(cols[3]);
        table.baseline_variance.push(cols[4]);
    }
    Ok(table)
}
