//! Run artifacts: CSV files, plot scripts and the JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// One acceptance band. `pass` is false when the value is not finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn band(name: &str, value: f64, target: Option<f64>, lower: Option<f64>, upper: Option<f64>) -> Self {
        let pass = value.is_finite() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        Self {
            name: name.into(),
            value,
            target,
            lower,
            upper,
            pass,
        }
    }

    /// `|value − target| ≤ tol`.
    pub fn absolute(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self::band(name, value, Some(target), Some(target - tol), Some(target + tol))
    }

    /// `|value/target − 1| ≤ rel`.
    pub fn relative(name: &str, value: f64, target: f64, rel: f64) -> Self {
        let d = (target * rel).abs();
        Self::band(name, value, Some(target), Some(target - d), Some(target + d))
    }

    pub fn at_most(name: &str, value: f64, upper: f64) -> Self {
        Self::band(name, value, None, None, Some(upper))
    }

    pub fn at_least(name: &str, value: f64, lower: f64) -> Self {
        Self::band(name, value, None, Some(lower), None)
    }
}

/// Result of one seed.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub pass: bool,
    /// Set when the run stopped early; the files listed were still written.
    pub partial: bool,
    pub error: Option<String>,
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
}

impl RunSummary {
    pub fn value(&mut self, name: &str, v: f64) {
        self.values.insert(name.into(), v);
    }

    pub fn check(&mut self, c: Check) {
        log::info!(
            "{}: {:.6e} [{}, {}] {}",
            c.name,
            c.value,
            c.lower.map_or("-".into(), |v| format!("{v:.6e}")),
            c.upper.map_or("-".into(), |v| format!("{v:.6e}")),
            if c.pass { "pass" } else { "FAIL" }
        );
        self.checks.push(c);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub pass: bool,
    pub runs: Vec<RunSummary>,
    /// Resolved configuration of the run.
    pub config: serde_json::Value,
}

impl Summary {
    pub fn any_error(&self) -> bool {
        self.runs.iter().any(|r| r.error.is_some())
    }
}

/// Writes files under one output directory and records their relative paths.
pub struct Artifacts {
    root: PathBuf,
    dir: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    pub fn new(root: &Path, sub: Option<&str>) -> Result<Self, CliError> {
        let dir = match sub {
            Some(s) => root.join(s),
            None => root.to_path_buf(),
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::Io {
            path: dir.clone(),
            source: e,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            dir,
            files: Vec::new(),
        })
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
        let rel = path.strip_prefix(&self.root).unwrap_or(&path);
        self.files.push(rel.to_string_lossy().replace('\\', "/"));
        Ok(())
    }

    /// CSV with a header row and numeric columns in scientific notation.
    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io {
            path: self.dir.join(name),
            source: std::io::Error::other(e),
        };
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r.iter().map(|v| format!("{v:.9e}"))).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io {
            path: self.dir.join(name),
            source: std::io::Error::other(e.to_string()),
        })?;
        self.text(name, &String::from_utf8_lossy(&bytes))
    }

    /// Matplotlib script reading the CSVs next to it.
    pub fn plot(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let script = format!("{PLOT_PRELUDE}\n{}\nplt.tight_layout()\nplt.savefig(here('{name}.png'), dpi=150)\n", body.trim());
        self.text(&format!("plot_{name}.py"), &script)
    }
}

const PLOT_PRELUDE: &str = r#"import csv
import json
import os

import matplotlib.pyplot as plt


def here(name):
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), name)


def load(name):
    with open(here(name)) as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]} if rows else {}
"#;

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), CliError> {
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Io { path, source: e })
}
