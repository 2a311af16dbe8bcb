//! Multi-pose face recognition building blocks.
//!
//! The crate covers the whole offline pipeline, from landmark-driven
//! alignment to evaluation metrics:
//!
//! * [`geometry`]: roll correction, similarity alignment against a
//!   reference landmark model, bilinear warping and cropping.
//! * [`features`]: patch LBP histograms at facial key points (HDLBP), the
//!   binary feature-file format for externally computed embeddings, and
//!   multi-source concatenation.
//! * [`adaptation`]: PCA fitted on the test collection, plus power and L2
//!   normalization.
//! * [`matching`]: cosine similarity, softmax score fusion across pose
//!   pipelines and across template image pairs.
//! * [`protocol`]: manifest ingestion, templates, gallery/probe splits and
//!   the verification / identification runners.
//! * [`metrics`]: ROC, TAR@FAR, FAR@TAR and CMC.
//! * [`synthetic`]: procedurally generated corpora used by tests and the CLI.

pub mod adaptation;
pub mod features;
pub mod geometry;
pub mod image;
pub mod matching;
pub mod metrics;
pub mod protocol;
pub mod synthetic;

pub use adaptation::{PcaModel, PostProcess};
pub use features::{ExtractorConfig, FeatureVector};
pub use geometry::{LandmarkSchema, LandmarkSet, ReferenceModel, SimilarityTransform};
pub use image::Image;
pub use matching::{FusionConfig, RepresentationSet};
pub use metrics::{RocCurve, RocPoint};
pub use protocol::{MediaRecord, ScoreMatrix, Split, Template, VerificationRecord};
