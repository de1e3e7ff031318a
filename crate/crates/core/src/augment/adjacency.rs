use serde::{Deserialize, Serialize};

use super::AugmentError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyOpts {
    /// Distance threshold; pairs farther apart get no edge.
    pub kappa: f64,
    pub self_loops: bool,
}

impl Default for AdjacencyOpts {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            self_loops: true,
        }
    }
}

/// Dense symmetric weighted adjacency of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub n: usize,
    /// Row-major `n × n`.
    pub weights: Vec<f64>,
    pub sigma0: f64,
    /// True when all distances coincided and σ0 fell back to 1.
    pub sigma_fallback: bool,
}

impl Adjacency {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Number of non-zero entries, self-loops included.
    pub fn nnz(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }
}

/// `exp(−d²/(2σ0²))` when `d ≤ κ`, else 0.
pub fn gaussian_weight(dist: f64, sigma0: f64, kappa: f64) -> f64 {
    if dist <= kappa {
        (-dist * dist / (2.0 * sigma0 * sigma0)).exp()
    } else {
        0.0
    }
}

/// Relative size below which distances (to the feature scale) and their spread
/// (to the mean distance) count as rounding noise.
pub const COINCIDENT: f64 = 1e-9;

/// Thresholded Gaussian kernel over the Euclidean distances between node
/// rows of `x` (`n_nodes × len`, row-major). σ0 is the population standard
/// deviation of the distinct pairwise distances of this sample.
///
/// Rows that agree to rounding are treated as identical, and a σ0 that is
/// pure rounding falls back to 1, so proportional sensors give a clean graph.
pub fn build_adjacency(x: &[f64], n_nodes: usize, len: usize, opts: &AdjacencyOpts) -> Result<Adjacency, AugmentError> {
    if n_nodes < 2 {
        return Err(AugmentError::Config(format!("adjacency needs at least 2 nodes, got {n_nodes}")));
    }
    assert_eq!(x.len(), n_nodes * len, "feature buffer does not match n_nodes × len");
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = COINCIDENT * scale * (len as f64).sqrt();
    let mut dist = vec![0.0; n_nodes * n_nodes];
    let mut pairs = Vec::with_capacity(n_nodes * (n_nodes - 1) / 2);
    for i in 0..n_nodes {
        let xi = &x[i * len..(i + 1) * len];
        for j in i + 1..n_nodes {
            let xj = &x[j * len..(j + 1) * len];
            let d = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let d = if d <= tol { 0.0 } else { d };
            dist[i * n_nodes + j] = d;
            dist[j * n_nodes + i] = d;
            pairs.push(d);
        }
    }
    let mean = pairs.iter().sum::<f64>() / pairs.len() as f64;
    let var = pairs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / pairs.len() as f64;
    let (sigma0, sigma_fallback) = if var.sqrt() > COINCIDENT * mean {
        (var.sqrt(), false)
    } else {
        (1.0, true)
    };
    if sigma_fallback {
        log::debug!("all pairwise distances equal; using sigma0 = 1");
    }

    let mut weights = vec![0.0; n_nodes * n_nodes];
    for i in 0..n_nodes {
        for j in 0..n_nodes {
            weights[i * n_nodes + j] = if i == j {
                if opts.self_loops {
                    1.0
                } else {
                    0.0
                }
            } else {
                gaussian_weight(dist[i * n_nodes + j], sigma0, opts.kappa)
            };
        }
    }
    Ok(Adjacency {
        n: n_nodes,
        weights,
        sigma0,
        sigma_fallback,
    })
}
