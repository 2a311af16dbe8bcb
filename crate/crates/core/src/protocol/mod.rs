//! Dataset manifests, templates, gallery/probe splits and the
//! verification (1:1) and identification (1:N) runners.

mod manifest;
mod run;
mod split;

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::LandmarkSet;
use crate::matching::MatchingError;

pub use manifest::{load_manifest, read_manifest, write_manifest, MANIFEST_COLUMNS};
pub use run::{
    read_score_rows, read_verification_rows, run_identification, run_verification,
    write_score_matrix, write_verification, ScoreMatrix, ScoreRow, VerificationRecord,
};
pub use split::{load_split, Split, SplitSpec};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),
    #[error("template {template:?} mixes subjects {first:?} and {second:?}")]
    InconsistentSubject {
        template: String,
        first: String,
        second: String,
    },
    #[error("split {split:?} references unknown template {template:?}")]
    UnknownTemplate { split: String, template: String },
    #[error("split {split:?} lists template {template:?} twice on one side")]
    DuplicateTemplate { split: String, template: String },
    #[error("closed-set split {split:?}: probe subject {subject:?} is not enrolled in the gallery")]
    ClosedSetViolation { split: String, subject: String },
    #[error("split {0:?} has no verification pairs")]
    MissingPairs(String),
    #[error("no representation for image {0:?}")]
    MissingRepresentation(String),
    #[error("scoring {probe:?} against {gallery:?}: {source}")]
    Matching {
        probe: String,
        gallery: String,
        #[source]
        source: MatchingError,
    },
    #[error("score table: {0}")]
    ScoreTable(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One manifest row: an image or video frame with its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaRecord {
    pub image_id: String,
    pub template_id: String,
    pub subject_id: String,
    pub filepath: PathBuf,
    /// `[x, y, w, h]` in pixels.
    pub bbox: Option<[f64; 4]>,
    pub pose_bucket: Option<String>,
    pub landmarks: Option<LandmarkSet>,
}

/// A subject's collection of images treated as one enrollment or query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub template_id: String,
    pub subject_id: String,
    /// Member image ids, sorted.
    pub members: Vec<String>,
}

/// Groups records by template id. Templates come out sorted by id with
/// sorted members, so the result does not depend on record order.
pub fn build_templates(records: &[MediaRecord]) -> Result<Vec<Template>, ProtocolError> {
    let mut groups: BTreeMap<&str, Template> = BTreeMap::new();
    let mut ordered: Vec<&MediaRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    for r in ordered {
        let t = groups.entry(&r.template_id).or_insert_with(|| Template {
            template_id: r.template_id.clone(),
            subject_id: r.subject_id.clone(),
            members: Vec::new(),
        });
        if t.subject_id != r.subject_id {
            let (first, second) = if t.subject_id < r.subject_id {
                (t.subject_id.clone(), r.subject_id.clone())
            } else {
                (r.subject_id.clone(), t.subject_id.clone())
            };
            return Err(ProtocolError::InconsistentSubject {
                template: r.template_id.clone(),
                first,
                second,
            });
        }
        t.members.push(r.image_id.clone());
    }
    Ok(groups.into_values().collect())
}
