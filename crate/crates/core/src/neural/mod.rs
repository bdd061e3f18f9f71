//! Multi-label feed-forward and 1-D convolutional classifiers with
//! hand-written backpropagation.
//!
//! Batches are matrices with one row per sample. Sequence activations are
//! laid out channel-major (`channel * len + position`). Training minimises
//! the sum over labels of the batch-mean binary cross-entropy with Adam.

mod loss;
mod network;
mod train;

use thiserror::Error;

pub use loss::{bce_with_logits, per_label_bce, sigmoid, softplus};
pub use network::{
    window_output_len, ForwardCache, LayerParams, LayerSpec, Network, NetworkSpec, Shape,
};
pub use train::{
    feature_matrix, label_matrix, train, Adam, TrainConfig, TrainedModel, MODEL_FORMAT,
    MODEL_VERSION,
};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid network: {0}")]
    Spec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("model version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
