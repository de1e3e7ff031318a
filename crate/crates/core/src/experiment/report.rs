use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::metrics::{mean_std, relative_delta, Metrics};
use super::ExperimentError;
use crate::augment::FeatureSet;
use crate::nn::Architecture;

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.txt";
pub const SENSOR_MAE_FILE: &str = "per_sensor_mae.csv";
pub const PLOT_FILE: &str = "plot_data.csv";

/// Outcome of one (architecture, variant, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub architecture: Architecture,
    pub variant: FeatureSet,
    pub seed: u64,
    pub n_nodes: usize,
    pub n_params: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test: Metrics,
    /// Test MAE per target column, in `target_names` order.
    pub per_sensor_mae: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

/// Mean ± std over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub architecture: Architecture,
    pub variant: FeatureSet,
    pub n_seeds: usize,
    pub rmse: Summary,
    pub mae: Summary,
    pub accuracy: Summary,
}

/// Relative change of the physics-enhanced means over the data-driven ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub architecture: Architecture,
    pub rmse: f64,
    pub mae: f64,
    pub accuracy: f64,
}

/// Actual and predicted test values of one target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub architecture: Architecture,
    pub variant: FeatureSet,
    pub seed: u64,
    pub sensor: String,
    /// First row of each test window.
    pub window_start: Vec<usize>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    /// Noise std in kg/s, absent for the ideal scenario.
    pub sigma: Option<f64>,
    pub rows: usize,
    pub seeds: Vec<u64>,
    pub target_names: Vec<String>,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
    pub deltas: Vec<DeltaRow>,
    pub series: Vec<PlotSeries>,
}

impl MetricsReport {
    /// Sorts cells and series, then derives aggregates and deltas.
    pub fn assemble(
        scenario: Scenario,
        sigma: Option<f64>,
        rows: usize,
        target_names: Vec<String>,
        mut cells: Vec<CellResult>,
        mut series: Vec<PlotSeries>,
    ) -> Self {
        cells.sort_by_key(|c| (c.architecture, c.variant, c.seed));
        series.sort_by(|a, b| {
            (a.architecture, a.variant, a.seed, &a.sensor).cmp(&(b.architecture, b.variant, b.seed, &b.sensor))
        });
        let mut seeds: Vec<u64> = cells.iter().map(|c| c.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();

        let mut aggregates = Vec::new();
        for group in cells.chunk_by(|a, b| (a.architecture, a.variant) == (b.architecture, b.variant)) {
            let pick = |f: fn(&Metrics) -> f64| Summary::of(&group.iter().map(|c| f(&c.test)).collect::<Vec<_>>());
            aggregates.push(AggregateRow {
                architecture: group[0].architecture,
                variant: group[0].variant,
                n_seeds: group.len(),
                rmse: pick(|m| m.rmse),
                mae: pick(|m| m.mae),
                accuracy: pick(|m| m.accuracy),
            });
        }
        let deltas = aggregates
            .chunk_by(|a, b| a.architecture == b.architecture)
            .filter_map(|rows| {
                let base = rows.iter().find(|r| r.variant == FeatureSet::DataDriven)?;
                let enh = rows.iter().find(|r| r.variant == FeatureSet::PhysicsEnhanced)?;
                Some(DeltaRow {
                    architecture: base.architecture,
                    rmse: relative_delta(base.rmse.mean, enh.rmse.mean),
                    mae: relative_delta(base.mae.mean, enh.mae.mean),
                    accuracy: relative_delta(base.accuracy.mean, enh.accuracy.mean),
                })
            })
            .collect();
        Self {
            scenario,
            sigma,
            rows,
            seeds,
            target_names,
            cells,
            aggregates,
            deltas,
            series,
        }
    }

    pub fn aggregate(&self, arch: Architecture, variant: FeatureSet) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|r| r.architecture == arch && r.variant == variant)
    }

    pub fn delta(&self, arch: Architecture) -> Option<&DeltaRow> {
        self.deltas.iter().find(|d| d.architecture == arch)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Table in the layout of the paper's comparison tables: RMSE and MAE
    /// ×10⁻³, accuracy ×10⁻², sorted by architecture then variant.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let scenario = match self.sigma {
            Some(s) => format!("{} (sigma {s} kg/s)", self.scenario),
            None => self.scenario.to_string(),
        };
        let _ = writeln!(out, "Scenario: {scenario}; {} rows; seeds {}", self.rows, seeds.join(" "));
        let _ = writeln!(out, "Normalized test targets, mean ± std over seeds.");
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:<17} {:>17} {:>17} {:>17} {:>9}",
            "model", "variant", "RMSE ×10⁻³", "MAE ×10⁻³", "Accuracy ×10⁻²", "ΔRMSE"
        );
        for r in &self.aggregates {
            let cell = |s: Summary, scale: f64| format!("{:.3} ± {:.3}", s.mean * scale, s.std * scale);
            let delta = match (r.variant, self.delta(r.architecture)) {
                (FeatureSet::PhysicsEnhanced, Some(d)) => format!("{:+.1}%", d.rmse * 100.0),
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "{:<12} {:<17} {:>17} {:>17} {:>17} {:>9}",
                r.architecture.name(),
                r.variant.label(),
                cell(r.rmse, 1e3),
                cell(r.mae, 1e3),
                cell(r.accuracy, 1e2),
                delta
            );
        }
        out
    }

    /// One row per cell and target column.
    pub fn per_sensor_csv(&self) -> String {
        let mut out = String::from("architecture,variant,seed,sensor,mae\n");
        for c in &self.cells {
            for (name, mae) in self.target_names.iter().zip(&c.per_sensor_mae) {
                let _ = writeln!(out, "{},{},{},{},{}", c.architecture, c.variant.label(), c.seed, name, mae);
            }
        }
        out
    }

    /// Predicted against actual test series of the selected sensors.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("architecture,variant,seed,sensor,window_start,actual,predicted\n");
        for s in &self.series {
            for ((start, a), p) in s.window_start.iter().zip(&s.actual).zip(&s.predicted) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    s.architecture,
                    s.variant.label(),
                    s.seed,
                    s.sensor,
                    start,
                    a,
                    p
                );
            }
        }
        out
    }
}

/// Writes the structured report, the table, per-sensor MAE and plot data.
pub fn emit_report(report: &MetricsReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ExperimentError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let files = [
        (REPORT_FILE, report.to_json()),
        (TABLE_FILE, report.table()),
        (SENSOR_MAE_FILE, report.per_sensor_csv()),
        (PLOT_FILE, report.plot_csv()),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
