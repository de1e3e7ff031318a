//! From sensor tables to model-ready graph samples: noise, physics-derived
//! nodes, normalization, windows, Gaussian-kernel adjacency, batching.

mod adjacency;
mod batch;
mod noise;
mod normalize;
mod physics;
mod pipeline;
mod split;
mod window;

use thiserror::Error;

use crate::hydro::PhysicsError;
use crate::sim::TableError;

pub use adjacency::{build_adjacency, gaussian_weight, Adjacency, AdjacencyOpts, COINCIDENT};
pub use batch::{block_diag_batch, BatchedGraph};
pub use noise::inject_noise;
pub use normalize::{fit_normalization, FeatureMatrix, NormalizationStats, CONSTANT_SPAN};
pub use physics::{augment_physics, AugmentOpts, AugmentationMap, AugmentedFrames, FlowTerm, Provenance};
pub use pipeline::{prepare_samples, FeatureSet, PrepareOpts, PreparedData};
pub use split::{chronological_split, SplitRanges};
pub use window::{window_slices, GraphSample, Window};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{rows} rows cannot fill a window of {window}")]
    TooFewRows { rows: usize, window: usize },
    #[error("split error: {0}")]
    Split(String),
    #[error("batch error: {0}")]
    Batch(String),
}
