//! In-plane face alignment.
//!
//! Detected landmarks are used to remove the roll of the face, then a
//! non-reflective similarity transform registers them to a reference
//! landmark model and the image is resampled into a fixed-size crop.

mod align;
mod landmarks;
mod reference;
mod transform;
mod warp;

use thiserror::Error;

pub use align::{align, align_with_transforms, Alignment, Redetect};
pub use landmarks::{estimate_roll, LandmarkSchema, LandmarkSet};
pub use reference::{
    average_landmarks, builtin_reference, ReferenceModel, BUILTIN_REFERENCES, DEFAULT_CROP_HEIGHT,
    DEFAULT_CROP_WIDTH,
};
pub use transform::{estimate_similarity_transform, SimilarityTransform};
pub use warp::{roll_correct, roll_correct_with_transform, warp_and_crop, warp_image};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("landmark schema mismatch: {0} vs {1}")]
    SchemaMismatch(String, String),
    #[error("degenerate landmark configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("landmark schema {0} has no eye anchor points")]
    MissingAnchors(String),
    #[error("schema {schema} expects {expected} points, got {actual}")]
    PointCount {
        schema: String,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite landmark coordinate at index {0}")]
    NonFinite(usize),
    #[error("invalid similarity parameters: {0}")]
    InvalidTransform(&'static str),
    #[error("reference model: {0}")]
    Reference(String),
    #[error("landmark re-detection failed: {0}")]
    Redetect(String),
}
