//! Dense reverse-mode autodiff, graph layers, models, optimizer and training.

pub mod checkpoint;
mod data;
mod gradcheck;
pub mod graph;
pub mod layers;
mod model;
mod optim;
mod tape;
mod train;
#[cfg(test)]
pub(crate) mod model_tests;
mod tensor;

use thiserror::Error;

pub use checkpoint::{load_params, read_params, save_params, write_params};
pub use data::{GraphBatch, GraphDataset, SampleGraph};
pub use gradcheck::{check_gradients, GRAD_FLOOR};
pub use graph::{
    normalized_laplacian, power_iteration_lambda_max, scaled_laplacian, scaled_laplacian_of, Blocks, EdgeList,
    LambdaMax,
};
pub use layers::Params;
pub use model::{Activation, Architecture, Model, ModelConfig};
pub use optim::NAdam;
pub use tape::{selu, Gradients, Tape, Var, SELU_ALPHA, SELU_LAMBDA, ZERO_ROW};
pub use tensor::Tensor;
pub use train::{evaluate, predict_dataset, train, write_history_csv, EpochRecord, TrainReport};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical consistency error: {0}")]
    Numerical(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
