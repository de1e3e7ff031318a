use std::path::Path;
use std::time::Instant;

use super::config::{DataSource, ExperimentConfig, Scenario};
use super::metrics::{compute_metrics, per_sensor_mae};
use super::report::{CellResult, MetricsReport, PlotSeries};
use super::ExperimentError;
use crate::augment::{inject_noise, prepare_samples, FeatureSet, PreparedData, Provenance};
use crate::hydro::FluidProps;
use crate::nn::{predict_dataset, train, write_history_csv, write_params, Architecture, GraphDataset, Model, TrainReport};
use crate::sim::{
    generate_dataset, import_table, synthesize_weather, DatasetOpts, NetworkTopology, SensorKind, SensorTable,
    WeatherProfile,
};

/// Sensor table of the configured source, cut to the leading `rows`.
pub fn load_table(cfg: &ExperimentConfig, topology: &NetworkTopology) -> Result<SensorTable, ExperimentError> {
    match &cfg.dataset {
        DataSource::Generate { weather_seed } => {
            let weather = synthesize_weather(cfg.rows, *weather_seed, &WeatherProfile::default());
            Ok(generate_dataset(topology, &weather, &FluidProps::water(), &DatasetOpts::default())?)
        }
        DataSource::File { path } => {
            let table = import_table(path)?;
            if table.n_rows() < cfg.rows {
                return Err(ExperimentError::Config(format!(
                    "{} has {} rows, {} requested",
                    path.display(),
                    table.n_rows(),
                    cfg.rows
                )));
            }
            Ok(table.slice_rows(0..cfg.rows))
        }
    }
}

/// The table the models see: unchanged for the ideal scenario, with noisy
/// mass flows otherwise.
pub fn scenario_table(cfg: &ExperimentConfig, table: &SensorTable) -> SensorTable {
    match cfg.scenario {
        Scenario::Ideal => table.clone(),
        Scenario::Noisy => inject_noise(table, cfg.sigma, cfg.noise_seed),
    }
}

/// Normalized, windowed, split samples of one variant.
pub struct VariantData {
    pub variant: FeatureSet,
    pub target_names: Vec<String>,
    pub n_nodes: usize,
    pub train: GraphDataset,
    pub val: GraphDataset,
    pub test: GraphDataset,
}

impl VariantData {
    pub fn new(data: PreparedData) -> Result<Self, ExperimentError> {
        let split = &data.split;
        let inside = |s: &[crate::augment::GraphSample], r: &std::ops::Range<usize>| {
            s.len() == r.len() && s.iter().all(|w| r.contains(&w.start))
        };
        if !(inside(&data.train, &split.train) && inside(&data.val, &split.val) && inside(&data.test, &split.test)) {
            return Err(ExperimentError::Config("samples fall outside their split ranges".into()));
        }
        Ok(Self {
            variant: data.feature_set,
            n_nodes: data.n_nodes(),
            target_names: data.target_names,
            train: GraphDataset::new(data.train)?,
            val: GraphDataset::new(data.val)?,
            test: GraphDataset::new(data.test)?,
        })
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }
}

pub fn prepare_variant(
    cfg: &ExperimentConfig,
    table: &SensorTable,
    topology: &NetworkTopology,
    variant: FeatureSet,
) -> Result<VariantData, ExperimentError> {
    let data = prepare_samples(table, topology, &FluidProps::water(), variant, &cfg.prepare_opts())?;
    if variant == FeatureSet::DataDriven {
        let flows = table.indices_of(SensorKind::MassFlow).len();
        if data.n_nodes() != flows || data.provenance.iter().any(|p| *p != Provenance::Physical) {
            return Err(ExperimentError::Config(format!(
                "data-driven graph has {} nodes, expected the {flows} flow sensors only",
                data.n_nodes()
            )));
        }
    }
    if let Some(s) = cfg.plot_sensors.iter().find(|s| !data.target_names.contains(s)) {
        return Err(ExperimentError::Config(format!("plot sensor {s} is not a target")));
    }
    VariantData::new(data)
}

/// Everything one trained cell produced.
#[derive(Debug)]
pub struct CellOutcome {
    pub result: CellResult,
    pub model: Model,
    pub training: TrainReport,
    pub series: Vec<PlotSeries>,
}

impl CellOutcome {
    /// Directory name of the cell's artifacts.
    pub fn slug(&self) -> String {
        let r = &self.result;
        format!("{}-{}-seed{}", r.architecture, r.variant.label(), r.seed)
    }

    /// Writes `history.csv` and `model.ckpt` into `dir/<slug>/`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), ExperimentError> {
        let dir = dir.join(self.slug());
        std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
        let history = dir.join("history.csv");
        let f = std::fs::File::create(&history).map_err(|e| ExperimentError::io(&history, e))?;
        write_history_csv(&self.training.history, std::io::BufWriter::new(f))
            .map_err(|e| ExperimentError::io(&history, e))?;
        let ckpt = dir.join("model.ckpt");
        let f = std::fs::File::create(&ckpt).map_err(|e| ExperimentError::io(&ckpt, e))?;
        write_params(self.model.params(), std::io::BufWriter::new(f))?;
        Ok(())
    }
}

/// Trains and evaluates one cell; errors carry the cell identity.
pub fn run_cell(
    cfg: &ExperimentConfig,
    data: &VariantData,
    arch: Architecture,
    seed: u64,
) -> Result<CellOutcome, ExperimentError> {
    let annotate = |e: ExperimentError| ExperimentError::Cell {
        architecture: arch,
        variant: data.variant,
        seed,
        source: Box::new(e),
    };
    let model_cfg = cfg.cell_model(arch, seed);
    let mut model = Model::new(&model_cfg, data.n_nodes, data.n_targets()).map_err(|e| annotate(e.into()))?;
    let training = train(&mut model, &data.train, &data.val).map_err(|e| annotate(e.into()))?;
    let pred = predict_dataset(&model, &data.test, model_cfg.batch_size).map_err(|e| annotate(e.into()))?;
    let truth: Vec<f64> = data.test.samples().iter().flat_map(|s| s.y.iter().copied()).collect();
    let test = compute_metrics(&truth, pred.data()).map_err(annotate)?;
    let k = data.n_targets();
    let window_start: Vec<usize> = data.test.samples().iter().map(|s| s.start).collect();
    let series = cfg
        .plot_sensors
        .iter()
        .map(|name| {
            let j = data.target_names.iter().position(|t| t == name).expect("checked when prepared");
            PlotSeries {
                architecture: arch,
                variant: data.variant,
                seed,
                sensor: name.clone(),
                window_start: window_start.clone(),
                actual: truth.iter().skip(j).step_by(k).copied().collect(),
                predicted: pred.data().iter().skip(j).step_by(k).copied().collect(),
            }
        })
        .collect();
    let result = CellResult {
        architecture: arch,
        variant: data.variant,
        seed,
        n_nodes: data.n_nodes,
        n_params: model.params().n_scalars(),
        epochs_run: training.epochs_run(),
        best_epoch: training.best_epoch,
        best_val_loss: training.best_val_loss,
        test,
        per_sensor_mae: per_sensor_mae(&truth, pred.data(), k),
    };
    Ok(CellOutcome {
        result,
        model,
        training,
        series,
    })
}

/// Runs the full grid and hands every finished cell to `on_cell`.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut on_cell: impl FnMut(&CellOutcome) -> Result<(), ExperimentError>,
) -> Result<MetricsReport, ExperimentError> {
    cfg.validate()?;
    let topology = NetworkTopology::default_network();
    let table = scenario_table(cfg, &load_table(cfg, &topology)?);
    let mut cells = Vec::new();
    let mut series = Vec::new();
    let mut target_names = None;
    for &variant in &cfg.variants {
        let t0 = Instant::now();
        let data = prepare_variant(cfg, &table, &topology, variant)?;
        log::info!(
            "{}: {} nodes, {}/{}/{} samples in {:.1}s",
            variant.label(),
            data.n_nodes,
            data.train.len(),
            data.val.len(),
            data.test.len(),
            t0.elapsed().as_secs_f64()
        );
        target_names.get_or_insert_with(|| data.target_names.clone());
        for &arch in &cfg.architectures {
            for &seed in &cfg.seeds {
                let t0 = Instant::now();
                let out = run_cell(cfg, &data, arch, seed)?;
                log::info!(
                    "{}: rmse {:.4e}, {} epochs in {:.1}s",
                    out.slug(),
                    out.result.test.rmse,
                    out.result.epochs_run,
                    t0.elapsed().as_secs_f64()
                );
                on_cell(&out)?;
                cells.push(out.result);
                series.extend(out.series);
            }
        }
    }
    let sigma = (cfg.scenario == Scenario::Noisy).then_some(cfg.sigma);
    Ok(MetricsReport::assemble(
        cfg.scenario,
        sigma,
        cfg.rows,
        target_names.unwrap_or_default(),
        cells,
        series,
    ))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, ExperimentError> {
    run_experiment_with(cfg, |_| Ok(()))
}
