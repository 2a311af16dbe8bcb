//! Unsupervised domain adaptation: PCA fitted on the test collection,
//! followed by power and L2 normalization.

mod normalize;
mod pca;
mod store;

use thiserror::Error;

pub use normalize::{l2_normalize, power_normalize, PostProcess};
pub use pca::{fit_pca, fit_pca_with, project_pca, PcaModel, PcaSolver, DEFAULT_RETENTION};
pub use store::{load_pca, read_pca, save_pca, write_pca, MPCA_MAGIC};

#[derive(Debug, Error)]
pub enum AdaptationError {
    #[error("PCA needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample covariance is zero")]
    ZeroVariance,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("pipeline mismatch: {0:?} vs {1:?}")]
    PipelineMismatch(String, String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("PCA model format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
