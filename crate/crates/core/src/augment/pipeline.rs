use serde::{Deserialize, Serialize};

use super::adjacency::{build_adjacency, AdjacencyOpts};
use super::normalize::{fit_normalization, FeatureMatrix, NormalizationStats};
use super::physics::{augment_physics, AugmentOpts, Provenance};
use super::split::{chronological_split, SplitRanges};
use super::window::{window_slices, GraphSample};
use super::AugmentError;
use crate::hydro::FluidProps;
use crate::sim::{NetworkTopology, SensorKind, SensorTable};

/// Which nodes make up the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    /// Mass-flow sensors only.
    DataDriven,
    /// Mass-flow sensors plus physics-derived drops.
    PhysicsEnhanced,
}

impl FeatureSet {
    pub fn label(self) -> &'static str {
        match self {
            FeatureSet::DataDriven => "data-driven",
            FeatureSet::PhysicsEnhanced => "physics-enhanced",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOpts {
    pub window: usize,
    pub stride: usize,
    pub fractions: [f64; 3],
    pub adjacency: AdjacencyOpts,
    pub augment: AugmentOpts,
    /// Target column names; `None` takes every pressure and temperature column.
    pub targets: Option<Vec<String>>,
}

impl Default for PrepareOpts {
    fn default() -> Self {
        Self {
            window: 8,
            stride: 1,
            fractions: [0.8, 0.1, 0.1],
            adjacency: AdjacencyOpts::default(),
            augment: AugmentOpts::default(),
            targets: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub feature_set: FeatureSet,
    pub feature_names: Vec<String>,
    pub provenance: Vec<Provenance>,
    pub target_names: Vec<String>,
    pub x_stats: NormalizationStats,
    pub y_stats: NormalizationStats,
    /// Split over window indices.
    pub split: SplitRanges,
    pub train: Vec<GraphSample>,
    pub val: Vec<GraphSample>,
    pub test: Vec<GraphSample>,
    /// Samples whose distances were all equal.
    pub sigma_fallbacks: usize,
}

impl PreparedData {
    pub fn n_nodes(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }
}

/// Builds normalized graph samples from a (possibly noisy) sensor table.
///
/// The split is taken over windows; normalization statistics come from the
/// rows covered by training windows only.
pub fn prepare_samples(
    table: &SensorTable,
    topology: &NetworkTopology,
    fluid: &FluidProps,
    feature_set: FeatureSet,
    opts: &PrepareOpts,
) -> Result<PreparedData, AugmentError> {
    let (features, provenance) = match feature_set {
        FeatureSet::DataDriven => {
            let idx = table.indices_of(SensorKind::MassFlow);
            (FeatureMatrix::from_table(table, &idx), vec![Provenance::Physical; idx.len()])
        }
        FeatureSet::PhysicsEnhanced => {
            let aug = augment_physics(table, topology, fluid, &opts.augment)?;
            let all: Vec<usize> = (0..aug.table.n_columns()).collect();
            (FeatureMatrix::from_table(&aug.table, &all), aug.provenance)
        }
    };
    if features.n_features() == 0 {
        return Err(AugmentError::Schema("table has no mass-flow columns".into()));
    }
    let target_idx: Vec<usize> = match &opts.targets {
        Some(names) => names
            .iter()
            .map(|n| {
                table
                    .column_index(n)
                    .ok_or_else(|| AugmentError::Schema(format!("target column {n} not in table")))
            })
            .collect::<Result<_, _>>()?,
        None => {
            let mut idx = table.indices_of(SensorKind::Pressure);
            idx.extend(table.indices_of(SensorKind::Temperature));
            idx
        }
    };
    if target_idx.is_empty() {
        return Err(AugmentError::Schema("no target columns".into()));
    }
    let targets = FeatureMatrix::from_table(table, &target_idx);

    let rows = features.n_rows();
    if rows < opts.window {
        return Err(AugmentError::TooFewRows {
            rows,
            window: opts.window,
        });
    }
    let n_windows = (rows - opts.window) / opts.stride + 1;
    let split = chronological_split(n_windows, opts.fractions)?;
    let train_rows = 0..(split.train.end - 1) * opts.stride + opts.window;
    let x_stats = fit_normalization(&features.rows(train_rows.clone()))?;
    let y_stats = fit_normalization(&targets.rows(train_rows))?;
    let xn = x_stats.apply(&features)?;
    let yn = y_stats.apply(&targets)?;

    let windows = window_slices(&xn, &yn, opts.window, opts.stride)?;
    debug_assert_eq!(windows.len(), n_windows);
    let mut sigma_fallbacks = 0;
    let mut samples = Vec::with_capacity(windows.len());
    for w in windows {
        let adjacency = build_adjacency(&w.x, w.n_nodes, w.len, &opts.adjacency)?;
        sigma_fallbacks += adjacency.sigma_fallback as usize;
        samples.push(GraphSample::new(w, adjacency));
    }
    if sigma_fallbacks > 0 {
        log::warn!("{sigma_fallbacks} windows had identical pairwise distances; sigma0 fell back to 1");
    }
    let test = samples.split_off(split.test.start);
    let val = samples.split_off(split.val.start);
    Ok(PreparedData {
        feature_set,
        feature_names: features.names,
        provenance,
        target_names: targets.names,
        x_stats,
        y_stats,
        split,
        train: samples,
        val,
        test,
        sigma_fallbacks,
    })
}
