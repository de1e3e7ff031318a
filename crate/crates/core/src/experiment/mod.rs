//! Experiment driver: scenario assembly, sweeps over architectures,
//! variants and seeds, metrics and report files.

mod config;
mod metrics;
mod report;
mod run;

use std::path::{Path, PathBuf};

pub use config::{desk_model, DataSource, ExperimentConfig, Scenario};
pub use metrics::{compute_metrics, mean_std, per_sensor_mae, relative_delta, Metrics};
pub use report::{
    emit_report, AggregateRow, CellResult, DeltaRow, MetricsReport, PlotSeries, Summary, PLOT_FILE, REPORT_FILE,
    SENSOR_MAE_FILE, TABLE_FILE,
};
pub use run::{
    load_table, prepare_variant, run_cell, run_experiment, run_experiment_with, scenario_table, CellOutcome,
    VariantData,
};

use crate::augment::{AugmentError, FeatureSet};
use crate::nn::{Architecture, NnError};
use crate::sim::{SimError, TableError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metrics error: {0}")]
    Metrics(String),
    #[error("report format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{}/{}/seed {seed}: {source}", architecture, variant.label())]
    Cell {
        architecture: Architecture,
        variant: FeatureSet,
        seed: u64,
        #[source]
        source: Box<ExperimentError>,
    },
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
