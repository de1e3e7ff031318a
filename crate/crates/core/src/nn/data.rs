use std::cell::OnceCell;
use std::rc::Rc;

use super::graph::{scaled_laplacian_of, Blocks, EdgeList};
use super::{NnError, Tensor};
use crate::augment::{block_diag_batch, Adjacency, BatchedGraph, GraphSample};

/// Neighbourhoods derived once per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGraph {
    /// Neighbourhoods exactly as in the adjacency.
    pub edges: EdgeList,
    /// Neighbourhoods with a self-loop on every node.
    pub edges_loops: EdgeList,
}

impl SampleGraph {
    pub fn from_weights(weights: &[f64], n: usize) -> Self {
        Self {
            edges: EdgeList::from_dense(weights, n, false),
            edges_loops: EdgeList::from_dense(weights, n, true),
        }
    }

    pub fn from_adjacency(adj: &Adjacency) -> Self {
        Self::from_weights(&adj.weights, adj.n)
    }
}

/// Model input: stacked node features of `n_samples` disjoint graphs.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub n_samples: usize,
    pub n_nodes: usize,
    pub width: usize,
    pub n_targets: usize,
    /// `(n_samples·n_nodes) × width`.
    pub x: Tensor,
    /// `n_samples × n_targets`.
    pub y: Tensor,
    /// Scaled Laplacian `2L/λmax − I` of each sample, when requested.
    pub laplacian: Option<Rc<Blocks>>,
    pub edges: Rc<EdgeList>,
    pub edges_loops: Rc<EdgeList>,
}

impl GraphBatch {
    pub fn new(batched: BatchedGraph, graphs: &[&SampleGraph], laplacians: Option<Vec<Vec<f64>>>) -> Self {
        let n = batched.n_nodes;
        let edges = EdgeList::concat(&graphs.iter().map(|g| &g.edges).collect::<Vec<_>>());
        let edges_loops = EdgeList::concat(&graphs.iter().map(|g| &g.edges_loops).collect::<Vec<_>>());
        Self {
            n_samples: batched.n_samples,
            n_nodes: n,
            width: batched.width,
            n_targets: batched.n_targets,
            x: Tensor::from_vec(batched.total_nodes(), batched.width, batched.x),
            y: Tensor::from_vec(batched.n_samples, batched.n_targets, batched.y),
            laplacian: laplacians.map(|mats| Rc::new(Blocks { n, mats })),
            edges: Rc::new(edges),
            edges_loops: Rc::new(edges_loops),
        }
    }

    /// Batch with all graph structure computed on the spot.
    pub fn from_samples(samples: &[&GraphSample]) -> Result<Self, NnError> {
        let batched = block_diag_batch(samples).map_err(|e| NnError::Shape(e.to_string()))?;
        let graphs: Vec<SampleGraph> = samples.iter().map(|s| SampleGraph::from_adjacency(&s.adjacency)).collect();
        let laps = samples.iter().map(|s| scaled_laplacian_of(&s.adjacency.weights, s.n_nodes)).collect();
        Ok(Self::new(batched, &graphs.iter().collect::<Vec<_>>(), Some(laps)))
    }

    pub fn laplacian(&self) -> Result<&Rc<Blocks>, NnError> {
        self.laplacian
            .as_ref()
            .ok_or_else(|| NnError::Config("batch was built without Laplacians".into()))
    }
}

/// Samples with their graph structure precomputed. Laplacians are built on
/// first request.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    samples: Vec<GraphSample>,
    graphs: Vec<SampleGraph>,
    laplacians: OnceCell<Vec<Vec<f64>>>,
}

impl GraphDataset {
    pub fn new(samples: Vec<GraphSample>) -> Result<Self, NnError> {
        let first = samples
            .first()
            .ok_or_else(|| NnError::Config("dataset has no samples".into()))?;
        let shape = (first.n_nodes, first.window, first.y.len());
        if let Some(s) = samples.iter().find(|s| (s.n_nodes, s.window, s.y.len()) != shape) {
            return Err(NnError::Shape(format!(
                "sample at {} has shape {:?}, expected {shape:?}",
                s.start,
                (s.n_nodes, s.window, s.y.len())
            )));
        }
        let graphs = samples.iter().map(|s| SampleGraph::from_adjacency(&s.adjacency)).collect();
        Ok(Self {
            samples,
            graphs,
            laplacians: OnceCell::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[GraphSample] {
        &self.samples
    }

    pub fn n_nodes(&self) -> usize {
        self.samples[0].n_nodes
    }

    pub fn width(&self) -> usize {
        self.samples[0].window
    }

    pub fn n_targets(&self) -> usize {
        self.samples[0].y.len()
    }

    fn laplacians(&self) -> &[Vec<f64>] {
        self.laplacians.get_or_init(|| {
            self.samples
                .iter()
                .map(|s| scaled_laplacian_of(&s.adjacency.weights, s.n_nodes))
                .collect()
        })
    }

    pub fn batch(&self, indices: &[usize], with_laplacian: bool) -> GraphBatch {
        let samples: Vec<&GraphSample> = indices.iter().map(|&i| &self.samples[i]).collect();
        let batched = block_diag_batch(&samples).expect("dataset samples share one shape");
        let graphs: Vec<&SampleGraph> = indices.iter().map(|&i| &self.graphs[i]).collect();
        let laps = with_laplacian.then(|| {
            let all = self.laplacians();
            indices.iter().map(|&i| all[i].clone()).collect()
        });
        GraphBatch::new(batched, &graphs, laps)
    }

    /// Consecutive batches of at most `size` samples in index order.
    pub fn batches(&self, size: usize, with_laplacian: bool) -> impl Iterator<Item = GraphBatch> + '_ {
        let idx: Vec<usize> = (0..self.len()).collect();
        let chunks: Vec<Vec<usize>> = idx.chunks(size.max(1)).map(<[usize]>::to_vec).collect();
        chunks.into_iter().map(move |c| self.batch(&c, with_laplacian))
    }
}
