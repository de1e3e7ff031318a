use super::window::GraphSample;
use super::AugmentError;

/// Disjoint union of samples: stacked node features, one adjacency block per
/// sample and one target row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedGraph {
    pub n_samples: usize,
    /// Nodes per sample.
    pub n_nodes: usize,
    /// Feature width (window length).
    pub width: usize,
    /// `(n_samples·n_nodes) × width`, row-major.
    pub x: Vec<f64>,
    /// `n_samples × n_targets`, row-major.
    pub y: Vec<f64>,
    pub n_targets: usize,
    /// `n × n` blocks, one per sample.
    pub blocks: Vec<Vec<f64>>,
    /// First node row of each sample, plus the total at the end.
    pub offsets: Vec<usize>,
    pub starts: Vec<usize>,
}

impl BatchedGraph {
    pub fn total_nodes(&self) -> usize {
        self.n_samples * self.n_nodes
    }

    /// Full block-diagonal adjacency, `total × total`.
    pub fn dense_adjacency(&self) -> Vec<f64> {
        let total = self.total_nodes();
        let n = self.n_nodes;
        let mut a = vec![0.0; total * total];
        for (b, block) in self.blocks.iter().enumerate() {
            let o = self.offsets[b];
            for i in 0..n {
                a[(o + i) * total + o..(o + i) * total + o + n].copy_from_slice(&block[i * n..(i + 1) * n]);
            }
        }
        a
    }
}

pub fn block_diag_batch(samples: &[&GraphSample]) -> Result<BatchedGraph, AugmentError> {
    let first = samples
        .first()
        .ok_or_else(|| AugmentError::Batch("cannot batch zero samples".into()))?;
    let (n, width, n_targets) = (first.n_nodes, first.window, first.y.len());
    for s in samples {
        if s.n_nodes != n || s.window != width || s.y.len() != n_targets {
            return Err(AugmentError::Batch(format!(
                "sample at {} has {} nodes × {} steps and {} targets, expected {n} × {width} and {n_targets}",
                s.start,
                s.n_nodes,
                s.window,
                s.y.len()
            )));
        }
    }
    let mut x = Vec::with_capacity(samples.len() * n * width);
    let mut y = Vec::with_capacity(samples.len() * n_targets);
    for s in samples {
        x.extend_from_slice(&s.x);
        y.extend_from_slice(&s.y);
    }
    Ok(BatchedGraph {
        n_samples: samples.len(),
        n_nodes: n,
        width,
        x,
        y,
        n_targets,
        blocks: samples.iter().map(|s| s.adjacency.weights.clone()).collect(),
        offsets: (0..=samples.len()).map(|b| b * n).collect(),
        starts: samples.iter().map(|s| s.start).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{build_adjacency, AdjacencyOpts};

    fn sample(start: usize, n: usize, seed: f64) -> GraphSample {
        let x: Vec<f64> = (0..n * 2).map(|i| ((i as f64 + seed) * 0.37).sin().abs()).collect();
        let adjacency = build_adjacency(&x, n, 2, &AdjacencyOpts::default()).unwrap();
        GraphSample {
            start,
            n_nodes: n,
            window: 2,
            x,
            adjacency,
            y: vec![seed],
        }
    }

    #[test]
    fn single_sample_is_identity() {
        let s = sample(0, 4, 1.0);
        let b = block_diag_batch(&[&s]).unwrap();
        assert_eq!(b.x, s.x);
        assert_eq!(b.dense_adjacency(), s.adjacency.weights);
        assert_eq!(b.y, s.y);
    }

    #[test]
    fn three_blocks_without_cross_edges() {
        let s: Vec<GraphSample> = (0..3).map(|k| sample(k, 4, k as f64)).collect();
        let refs: Vec<&GraphSample> = s.iter().collect();
        let b = block_diag_batch(&refs).unwrap();
        assert_eq!(b.total_nodes(), 12);
        assert_eq!(b.offsets, vec![0, 4, 8, 12]);
        let a = b.dense_adjacency();
        for i in 0..12 {
            for j in 0..12 {
                if i / 4 != j / 4 {
                    assert_eq!(a[i * 12 + j], 0.0);
                } else {
                    assert_eq!(a[i * 12 + j], s[i / 4].adjacency.get(i % 4, j % 4));
                }
            }
        }
    }

    #[test]
    fn mixed_node_counts_rejected() {
        let a = sample(0, 4, 0.0);
        let b = sample(1, 5, 0.0);
        assert!(block_diag_batch(&[&a, &b]).is_err());
        assert!(block_diag_batch(&[]).is_err());
    }
}
