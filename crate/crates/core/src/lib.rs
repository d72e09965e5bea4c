//! Arabic letter pronunciation classification on pooled speech embeddings,
//! with PGD attacks and adversarial training.

pub mod adversarial;
pub mod audio;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod matrix;
pub mod neural;
pub mod oracle;
pub mod seed;

pub use matrix::{Matrix, Real};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Audio(#[from] audio::AudioError),
    #[error(transparent)]
    Embedding(#[from] embedding::EmbeddingError),
    #[error(transparent)]
    Neural(#[from] neural::NeuralError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}

impl Error {
    /// True when the failure came from NaN or infinite values in the numerics.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Neural(neural::NeuralError::NonFinite(_))
                | Error::Eval(eval::EvalError::Neural(neural::NeuralError::NonFinite(_)))
        )
    }
}
