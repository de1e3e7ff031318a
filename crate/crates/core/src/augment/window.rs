use super::adjacency::Adjacency;
use super::normalize::FeatureMatrix;
use super::AugmentError;

/// One sliding-window slice before graph construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Row index of the first timestep.
    pub start: usize,
    pub n_nodes: usize,
    pub len: usize,
    /// `n_nodes × len`, row `i` is feature `i` over the window.
    pub x: Vec<f64>,
    /// Targets at the window's last timestep.
    pub y: Vec<f64>,
}

/// A window together with its Gaussian-kernel graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub start: usize,
    pub n_nodes: usize,
    pub window: usize,
    pub x: Vec<f64>,
    pub adjacency: Adjacency,
    pub y: Vec<f64>,
}

impl GraphSample {
    pub fn new(w: Window, adjacency: Adjacency) -> Self {
        assert_eq!(adjacency.n, w.n_nodes);
        Self {
            start: w.start,
            n_nodes: w.n_nodes,
            window: w.len,
            x: w.x,
            adjacency,
            y: w.y,
        }
    }
}

/// Emits `⌊(rows − window)/stride⌋ + 1` windows.
pub fn window_slices(
    features: &FeatureMatrix,
    targets: &FeatureMatrix,
    window: usize,
    stride: usize,
) -> Result<Vec<Window>, AugmentError> {
    let rows = features.n_rows();
    if window == 0 || stride == 0 {
        return Err(AugmentError::Config("window and stride must be positive".into()));
    }
    if targets.n_rows() != rows {
        return Err(AugmentError::Schema(format!(
            "{} feature rows but {} target rows",
            rows,
            targets.n_rows()
        )));
    }
    if rows < window {
        return Err(AugmentError::TooFewRows { rows, window });
    }
    let count = (rows - window) / stride + 1;
    let n = features.n_features();
    Ok((0..count)
        .map(|k| {
            let start = k * stride;
            let mut x = Vec::with_capacity(n * window);
            for col in &features.columns {
                x.extend_from_slice(&col[start..start + window]);
            }
            let last = start + window - 1;
            Window {
                start,
                n_nodes: n,
                len: window,
                x,
                y: targets.columns.iter().map(|c| c[last]).collect(),
            }
        })
        .collect())
}
