//! Machine-readable verification reports and their on-disk form.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::group::GeometrySummary;

/// Stamped into every JSON report.
/// `max` that keeps NaN, so a NaN measurement cannot slip past a check.
pub fn nan_max(acc: f64, x: f64) -> f64 {
    if acc.is_nan() || x.is_nan() {
        f64::NAN
    } else {
        acc.max(x)
    }
}

pub const SCHEMA_VERSION: &str = "1";

/// How a measured value is compared with its target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|measured − target| ≤ tolerance`
    Within,
    /// `measured ≤ target + tolerance`
    AtMost,
    /// `measured ≥ target − tolerance`
    AtLeast,
    /// `measured ≤ tolerance · target`, a relative error budget
    Relative,
}

/// One measured quantity next to its theoretical target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the quantity is undefined (e.g. a 0/0 ratio).
    pub measured: Option<f64>,
    pub target: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: Option<f64>, target: f64, tolerance: f64, comparison: Comparison) -> Self {
        let pass = measured.is_some_and(|m| {
            m.is_finite()
                && match comparison {
                    Comparison::Within => (m - target).abs() <= tolerance,
                    Comparison::AtMost => m <= target + tolerance,
                    Comparison::AtLeast => m >= target - tolerance,
                    Comparison::Relative => m.abs() <= tolerance * target.abs(),
                }
        });
        Check { name: name.into(), measured, target, tolerance, comparison, pass }
    }

    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, Some(measured), target, tolerance, Comparison::Within)
    }

    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64, tolerance: f64) -> Self {
        Self::new(name, Some(measured), bound, tolerance, Comparison::AtMost)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64, tolerance: f64) -> Self {
        Self::new(name, Some(measured), bound, tolerance, Comparison::AtLeast)
    }

    /// Boolean property encoded as measured 1/0 against target 1.
    pub fn flag(name: impl Into<String>, holds: bool) -> Self {
        Self::new(name, Some(if holds { 1.0 } else { 0.0 }), 1.0, 0.0, Comparison::Within)
    }
}

/// A numeric table, exported as CSV on request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: String,
    pub scenario_id: String,
    pub kind: String,
    pub seed: u64,
    pub geometry: Option<GeometrySummary>,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Full structured results of the underlying operations.
    pub details: serde_json::Value,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(scenario_id: impl Into<String>, kind: impl Into<String>, seed: u64, geometry: Option<GeometrySummary>) -> Self {
        VerificationReport {
            schema_version: SCHEMA_VERSION.to_string(),
            scenario_id: scenario_id.into(),
            kind: kind.into(),
            seed,
            geometry,
            pass: true,
            checks: Vec::new(),
            details: serde_json::Value::Null,
            tables: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, c: Check) {
        self.pass &= c.pass;
        self.checks.push(c);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn set_details<T: Serialize>(&mut self, v: &T) -> Result<()> {
        self.details = serde_json::to_value(v).map_err(|e| Error::Numerical(format!("cannot serialise details: {e}")))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("cannot serialise report: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(invalid(format!("unknown output format `{other}`"))),
        }
    }
}

/// Writes `contents` next to `path` under a temporary name, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(Error::Io)
}

/// Writes `<id>.json` (always) and `<id>_<table>.csv` per table when CSV is
/// requested. Returns the written paths in order.
pub fn emit_report(report: &VerificationReport, dir: &Path, formats: &BTreeSet<Format>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json = dir.join(format!("{}.json", report.scenario_id));
    write_atomic(&json, report.to_json()?.as_bytes())?;
    written.push(json);
    if formats.contains(&Format::Csv) {
        for t in &report.tables {
            let path = dir.join(format!("{}_{}.csv", report.scenario_id, t.name));
            write_atomic(&path, t.to_csv().as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}
