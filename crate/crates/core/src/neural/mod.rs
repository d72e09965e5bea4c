//! Dense ReLU network, cross-entropy, Adam and the training loop.

mod adam;
mod checkpoint;
mod loss;
mod mlp;
mod train;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_model, save_checkpoint, sidecar_path, write_model, Checkpoint, MODEL_MAGIC};
pub use loss::{argmax, cross_entropy, cross_entropy_grad, log_softmax_row, per_example_loss, softmax};
pub use mlp::{Backward, ForwardTrace, Gradients, Linear, Mlp, MlpConfig, Mode};
pub use train::{adversarial_train, train, EpochMetrics, TrainConfig, TrainOutcome};

use crate::matrix::{Matrix, Real};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("label {label} outside [0, {classes})")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("trace was recorded before the model was last modified")]
    StaleTrace,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path:?}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Inputs and labels of one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<F> {
    x: Matrix<F>,
    y: Vec<usize>,
}

impl<F: Real> Batch<F> {
    pub fn new(x: Matrix<F>, y: Vec<usize>) -> Result<Self, NeuralError> {
        if y.is_empty() {
            return Err(NeuralError::EmptyBatch);
        }
        if x.rows() != y.len() {
            return Err(NeuralError::ShapeMismatch {
                what: "batch labels",
                expected: x.rows(),
                found: y.len(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Matrix<F> {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}
