//! Feature vectors and the extractors that produce them.

mod lbp;
mod store;

use thiserror::Error;

pub use lbp::{
    extract_hdlbp, extract_patch_histogram, lbp_code, uniform_bin, ExtractorConfig,
    HistogramKind, LBP_NEIGHBORS, LBP_RADIUS,
};
pub use store::{load_embeddings, read_features, save_embeddings, write_features, MPFV_MAGIC};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("pixel ({x}, {y}) is within {radius} pixel(s) of the border of a {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        radius: usize,
        width: usize,
        height: usize,
    },
    #[error("extractor config has no key points")]
    EmptyKeypoints,
    #[error("invalid extractor config: {0}")]
    InvalidConfig(String),
    #[error("invalid feature vector: {0}")]
    InvalidVector(String),
    #[error("feature file format error: {0}")]
    Format(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("cannot concatenate an empty list of features")]
    EmptyList,
    #[error("pipeline mismatch: {0:?} vs {1:?}")]
    PipelineMismatch(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-dimension real vector tagged with the pipeline that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pipeline_id: String,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(pipeline_id: impl Into<String>, values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.is_empty() {
            return Err(FeatureError::InvalidVector("zero dimension".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidVector(format!(
                "non-finite entry at index {i}"
            )));
        }
        Ok(Self {
            pipeline_id: pipeline_id.into(),
            values,
        })
    }

    pub fn pipeline_id(&self) -> &str {
        &self.pipeline_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn with_pipeline(mut self, pipeline_id: impl Into<String>) -> Self {
        self.pipeline_id = pipeline_id.into();
        self
    }

    /// Replaces the values, keeping the pipeline tag. Used by the
    /// adaptation stage, whose outputs are finite by construction.
    pub(crate) fn map_values(&self, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            pipeline_id: self.pipeline_id.clone(),
            values,
        }
    }
}

/// Concatenates several feature blocks of one pipeline, in order.
pub fn concat_features(parts: &[FeatureVector]) -> Result<FeatureVector, FeatureError> {
    let first = parts.first().ok_or(FeatureError::EmptyList)?;
    if let Some(other) = parts.iter().find(|p| p.pipeline_id != first.pipeline_id) {
        return Err(FeatureError::PipelineMismatch(
            first.pipeline_id.clone(),
            other.pipeline_id.clone(),
        ));
    }
    let values = parts
        .iter()
        .flat_map(|p| p.values.iter().copied())
        .collect();
    Ok(FeatureVector {
        pipeline_id: first.pipeline_id.clone(),
        values,
    })
}
