//! Run artifacts and their on-disk formats.
//!
//! A run writes, per scenario `<name>`:
//! - `<name>.csv` plus `<name>_<table>.csv` for secondary tables (CSV format),
//! - `<name>_fit.csv` when the run fitted anything (CSV format),
//! - `<name>_scenario.toml`, the effective configuration (CSV format),
//! - `<name>.json`, the complete artifact (JSON format),
//! - `<name>.log`, a one-line run record carrying the creation timestamp.
//!
//! CSV and JSON contents depend only on the configuration and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fitting::FitReport;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
    Bool(bool),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format_sig(*v, 9),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = v.abs().log10().floor() as i32;
    let sci = format!("{:.*e}", digits - 1, v);
    // Rounding can carry into the next decade, so read the exponent back.
    let exp = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse::<i32>().ok())
        .unwrap_or(exp);
    if exp < -5 || exp >= digits as i32 {
        let (mantissa, e) = sci.split_once('e').unwrap_or((&sci, "0"));
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{e}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of one column.
    pub fn values(&self, name: &str) -> Vec<f64> {
        match self.column(name) {
            Some(k) => self.rows.iter().filter_map(|r| r[k].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err =
            |e: csv::Error| Error::Config(format!("cannot render table {}: {e}", self.name));
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))
                .map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Config(format!("cannot render table {}: {e}", self.name)))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedFit {
    pub name: String,
    pub report: Option<FitReport>,
    /// Why the fit failed, when it did.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunArtifact {
    pub format_version: u32,
    pub scenario: String,
    pub pulses_per_setting: u64,
    pub expected_counts: bool,
    /// Acquisition time of one pulse budget at the repetition rate, seconds.
    pub acquisition_seconds: f64,
    pub config: ScenarioConfig,
    pub tables: Vec<Table>,
    pub fits: Vec<NamedFit>,
    /// Additional text outputs as `(file suffix, contents)`.
    pub attachments: Vec<(String, String)>,
    #[serde(skip)]
    pub created_unix: u64,
}

impl RunArtifact {
    pub fn new(scenario: &str, cfg: &ScenarioConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            scenario: scenario.into(),
            pulses_per_setting: cfg.pulses_per_setting,
            expected_counts: cfg.expected_counts,
            acquisition_seconds: cfg.acquisition_seconds(cfg.pulses_per_setting),
            config: cfg.effective(),
            tables: Vec::new(),
            fits: Vec::new(),
            attachments: Vec::new(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&FitReport> {
        self.fits
            .iter()
            .find(|f| f.name == name)
            .and_then(|f| f.report.as_ref())
    }

    /// First recorded fit failure.
    pub fn failure(&self) -> Option<Error> {
        self.fits.iter().find_map(|f| {
            f.error
                .as_ref()
                .map(|e| Error::Fit(format!("{}: {e}", f.name)))
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Config(format!("cannot render artifact: {e}")))
    }

    fn fits_csv(&self) -> Result<String> {
        let mut t = Table::new(
            "fit",
            &[
                "fit",
                "parameter",
                "value",
                "std_error",
                "residual_norm",
                "iterations",
                "at_bound",
                "error",
            ],
        );
        for f in &self.fits {
            match (&f.report, &f.error) {
                (Some(r), _) => {
                    for p in &r.parameters {
                        t.push(vec![
                            f.name.as_str().into(),
                            p.name.as_str().into(),
                            p.value.into(),
                            p.variance.sqrt().into(),
                            r.residual_norm.into(),
                            r.iterations.into(),
                            r.at_bound.into(),
                            "".into(),
                        ]);
                    }
                }
                (None, err) => t.push(vec![
                    f.name.as_str().into(),
                    "".into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    0usize.into(),
                    false.into(),
                    err.clone().unwrap_or_default().into(),
                ]),
            }
        }
        t.to_csv()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the artifact into `dir`; returns the paths written.
pub fn emit(artifact: &RunArtifact, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &artifact.scenario;
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        for (i, table) in artifact.tables.iter().enumerate() {
            let file = if i == 0 {
                format!("{name}.csv")
            } else {
                format!("{name}_{}.csv", table.name)
            };
            write(dir.join(file), &table.to_csv()?, &mut written)?;
        }
        if !artifact.fits.is_empty() {
            write(
                dir.join(format!("{name}_fit.csv")),
                &artifact.fits_csv()?,
                &mut written,
            )?;
        }
        write(
            dir.join(format!("{name}_scenario.toml")),
            &artifact.config.to_toml()?,
            &mut written,
        )?;
        for (suffix, contents) in &artifact.attachments {
            write(dir.join(format!("{name}_{suffix}")), contents, &mut written)?;
        }
    }
    if formats.contains(&OutputFormat::Json) {
        write(
            dir.join(format!("{name}.json")),
            &artifact.to_json()?,
            &mut written,
        )?;
    }
    let mut log = String::new();
    let _ = writeln!(
        log,
        "scenario={name} created_unix={} format_version={} seed={} files={}",
        artifact.created_unix,
        artifact.format_version,
        artifact.config.seed,
        written.len()
    );
    write(dir.join(format!("{name}.log")), &log, &mut written)?;
    Ok(written)
}
