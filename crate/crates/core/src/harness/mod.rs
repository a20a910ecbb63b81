//! Configuration ingestion, scenario execution and result persistence.

pub mod artifact;
pub mod config;
pub mod scenarios;

pub use artifact::{emit, Cell, OutputFormat, RunArtifact, Table};
pub use config::{load_config, parse_config, ScenarioConfig};
pub use scenarios::{
    run_calibrate, run_fig3, run_fig4, run_fig5, run_fit, run_simulate, run_table1, FitModel,
};

use std::path::Path;

use crate::error::{Error, Result};
use crate::fitting::{DecayDataset, DecayPoint};

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRow {
    t_ms: f64,
    value: f64,
    #[serde(default)]
    sigma: Option<f64>,
}

/// Reads a dataset CSV with header `t_ms,value[,sigma]`.
pub fn load_dataset(path: &Path) -> Result<DecayDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut points = Vec::new();
    for (i, row) in reader.deserialize::<DatasetRow>().enumerate() {
        let row =
            row.map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        points.push(DecayPoint {
            t: row.t_ms,
            value: row.value,
            sigma: row.sigma,
        });
    }
    DecayDataset::new(points).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
