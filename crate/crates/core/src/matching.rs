//! Multi-pose similarity: cosine similarity within a pipeline, softmax
//! fusion across pipelines, then softmax fusion across template image
//! pairs.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::features::FeatureVector;

pub const DEFAULT_BETA: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("pipeline mismatch: {0:?} vs {1:?}")]
    PipelineMismatch(String, String),
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("cannot fuse an empty score list")]
    EmptyList,
    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
    #[error("images {0:?} and {1:?} share no pipeline")]
    NoSharedPipelines(String, String),
    #[error("template has no images")]
    EmptyTemplate,
    #[error("no image pair of the two templates shares a pipeline")]
    NoComparablePairs,
    #[error("representation set for {0:?} is empty")]
    EmptyRepresentation(String),
    #[error("image {image:?} has two features for pipeline {pipeline:?}")]
    DuplicatePipeline { image: String, pipeline: String },
    #[error("invalid fusion bandwidth {0}")]
    InvalidBeta(f64),
}

/// Softmax fusion bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    beta: f64,
}

impl FusionConfig {
    pub fn new(beta: f64) -> Result<Self, MatchingError> {
        if beta.is_finite() && beta >= 0.0 {
            Ok(Self { beta })
        } else {
            Err(MatchingError::InvalidBeta(beta))
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { beta: DEFAULT_BETA }
    }
}

/// All pipeline representations of one image, keyed by pipeline id.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    image_id: String,
    reps: BTreeMap<String, FeatureVector>,
}

impl RepresentationSet {
    pub fn new(
        image_id: impl Into<String>,
        features: impl IntoIterator<Item = FeatureVector>,
    ) -> Result<Self, MatchingError> {
        let image_id = image_id.into();
        let mut reps = BTreeMap::new();
        for f in features {
            let pipeline = f.pipeline_id().to_string();
            if reps.insert(pipeline.clone(), f).is_some() {
                return Err(MatchingError::DuplicatePipeline {
                    image: image_id,
                    pipeline,
                });
            }
        }
        if reps.is_empty() {
            return Err(MatchingError::EmptyRepresentation(image_id));
        }
        Ok(Self { image_id, reps })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn get(&self, pipeline_id: &str) -> Option<&FeatureVector> {
        self.reps.get(pipeline_id)
    }

    pub fn pipelines(&self) -> impl Iterator<Item = &str> {
        self.reps.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }
}

/// Cosine of the angle between two features of the same pipeline.
pub fn cosine_sim(a: &FeatureVector, b: &FeatureVector) -> Result<f64, MatchingError> {
    if a.pipeline_id() != b.pipeline_id() {
        return Err(MatchingError::PipelineMismatch(
            a.pipeline_id().to_string(),
            b.pipeline_id().to_string(),
        ));
    }
    if a.dim() != b.dim() {
        return Err(MatchingError::DimMismatch(a.dim(), b.dim()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MatchingError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// `sum s_i exp(beta s_i) / sum exp(beta s_i)`.
///
/// Scores are sorted first, so the result does not depend on input order,
/// and the exponentials are shifted by the maximum score. The value is
/// accumulated as `max - weighted mean gap`, which is exact for a single
/// score and tends to `max` for large `beta`.
pub fn softmax_fuse(scores: &[f64], config: &FusionConfig) -> Result<f64, MatchingError> {
    if scores.is_empty() {
        return Err(MatchingError::EmptyList);
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MatchingError::NonFiniteScore(bad));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let beta = config.beta;
    let (mut num, mut den) = (0.0, 0.0);
    for &s in &sorted {
        let gap = max - s;
        let w = (-beta * gap).exp();
        num += gap * w;
        den += w;
    }
    Ok((max - num / den).clamp(min, max))
}

/// Fused similarity over the pipelines both images carry.
pub fn image_similarity(
    rx: &RepresentationSet,
    ry: &RepresentationSet,
    config: &FusionConfig,
) -> Result<f64, MatchingError> {
    let mut scores = Vec::with_capacity(rx.len().min(ry.len()));
    for (pipeline, fx) in &rx.reps {
        if let Some(fy) = ry.reps.get(pipeline) {
            scores.push(cosine_sim(fx, fy)?);
        }
    }
    if scores.is_empty() {
        return Err(MatchingError::NoSharedPipelines(
            rx.image_id.clone(),
            ry.image_id.clone(),
        ));
    }
    softmax_fuse(&scores, config)
}

/// Fused similarity over every comparable image pair of two templates.
pub fn template_similarity<X, Y>(
    tx: &[X],
    ty: &[Y],
    config: &FusionConfig,
) -> Result<f64, MatchingError>
where
    X: AsRef<RepresentationSet>,
    Y: AsRef<RepresentationSet>,
{
    if tx.is_empty() || ty.is_empty() {
        return Err(MatchingError::EmptyTemplate);
    }
    let mut scores = Vec::with_capacity(tx.len() * ty.len());
    for x in tx {
        for y in ty {
            match image_similarity(x.as_ref(), y.as_ref(), config) {
                Ok(s) => scores.push(s),
                Err(MatchingError::NoSharedPipelines(..)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if scores.is_empty() {
        return Err(MatchingError::NoComparablePairs);
    }
    softmax_fuse(&scores, config)
}

impl AsRef<RepresentationSet> for RepresentationSet {
    fn as_ref(&self) -> &RepresentationSet {
        self
    }
}
