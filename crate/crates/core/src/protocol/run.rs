use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::{ProtocolError, Split, Template};
use crate::matching::{template_similarity, FusionConfig, RepresentationSet};

/// Probe x gallery template similarities with ground-truth subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub probe_ids: Vec<String>,
    pub gallery_ids: Vec<String>,
    pub probe_subjects: Vec<String>,
    pub gallery_subjects: Vec<String>,
    /// Row-major, one row per probe.
    pub scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn rows(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.gallery_ids.len()
    }

    pub fn get(&self, probe: usize, gallery: usize) -> f64 {
        self.scores[probe * self.cols() + gallery]
    }

    pub fn row(&self, probe: usize) -> &[f64] {
        let c = self.cols();
        &self.scores[probe * c..(probe + 1) * c]
    }

    /// Gallery columns enrolled under the probe's subject.
    pub fn mates(&self, probe: usize) -> Vec<usize> {
        self.gallery_subjects
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == self.probe_subjects[probe])
            .map(|(j, _)| j)
            .collect()
    }

    /// Whether the probe's subject is enrolled in the gallery.
    pub fn is_mated(&self, probe: usize) -> bool {
        self.gallery_subjects
            .iter()
            .any(|s| *s == self.probe_subjects[probe])
    }

    /// Mated (genuine) and non-mated (impostor) cell scores.
    pub fn genuine_impostor(&self) -> (Vec<f64>, Vec<f64>) {
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                if self.probe_subjects[i] == self.gallery_subjects[j] {
                    genuine.push(self.get(i, j));
                } else {
                    impostor.push(self.get(i, j));
                }
            }
        }
        (genuine, impostor)
    }

    /// Keeps only the probes enrolled in the gallery.
    pub fn mated_only(&self) -> ScoreMatrix {
        let keep: Vec<usize> = (0..self.rows()).filter(|&i| self.is_mated(i)).collect();
        ScoreMatrix {
            probe_ids: keep.iter().map(|&i| self.probe_ids[i].clone()).collect(),
            probe_subjects: keep.iter().map(|&i| self.probe_subjects[i].clone()).collect(),
            gallery_ids: self.gallery_ids.clone(),
            gallery_subjects: self.gallery_subjects.clone(),
            scores: keep.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    /// Rebuilds a matrix from score-table rows using a template-to-subject
    /// lookup. Every probe/gallery combination must appear exactly once.
    pub fn from_rows(
        rows: &[ScoreRow],
        subjects: &HashMap<String, String>,
    ) -> Result<ScoreMatrix, ProtocolError> {
        let mut probe_ids: Vec<String> = Vec::new();
        let mut gallery_ids: Vec<String> = Vec::new();
        let mut p_index = HashMap::new();
        let mut g_index = HashMap::new();
        for r in rows {
            if !p_index.contains_key(&r.probe) {
                p_index.insert(r.probe.clone(), probe_ids.len());
                probe_ids.push(r.probe.clone());
            }
            if !g_index.contains_key(&r.gallery) {
                g_index.insert(r.gallery.clone(), gallery_ids.len());
                gallery_ids.push(r.gallery.clone());
            }
        }
        let cols = gallery_ids.len();
        let mut scores = vec![None; probe_ids.len() * cols];
        for r in rows {
            let cell = &mut scores[p_index[&r.probe] * cols + g_index[&r.gallery]];
            if cell.replace(r.score).is_some() {
                return Err(ProtocolError::ScoreTable(format!(
                    "duplicate cell ({}, {})",
                    r.probe, r.gallery
                )));
            }
        }
        let scores = scores
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                s.ok_or_else(|| {
                    ProtocolError::ScoreTable(format!(
                        "missing cell ({}, {})",
                        probe_ids[k / cols],
                        gallery_ids[k % cols]
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let subject = |id: &String| {
            subjects
                .get(id)
                .cloned()
                .ok_or_else(|| ProtocolError::ScoreTable(format!("unknown template {id:?}")))
        };
        Ok(ScoreMatrix {
            probe_subjects: probe_ids.iter().map(subject).collect::<Result<_, _>>()?,
            gallery_subjects: gallery_ids.iter().map(subject).collect::<Result<_, _>>()?,
            probe_ids,
            gallery_ids,
            scores,
        })
    }
}

/// One line of a score table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub probe: String,
    pub gallery: String,
    pub score: f64,
}

/// One scored verification pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRecord {
    pub template_a: String,
    pub template_b: String,
    pub score: f64,
    pub same_subject: bool,
}

fn template_reps<'a>(
    template: &Template,
    reps: &'a HashMap<String, RepresentationSet>,
) -> Result<Vec<&'a RepresentationSet>, ProtocolError> {
    template
        .members
        .iter()
        .map(|id| {
            reps.get(id)
                .ok_or_else(|| ProtocolError::MissingRepresentation(id.clone()))
        })
        .collect()
}

fn score_pair(
    a: &Template,
    ra: &[&RepresentationSet],
    b: &Template,
    rb: &[&RepresentationSet],
    config: &FusionConfig,
) -> Result<f64, ProtocolError> {
    template_similarity(ra, rb, config).map_err(|source| ProtocolError::Matching {
        probe: a.template_id.clone(),
        gallery: b.template_id.clone(),
        source,
    })
}

/// Full probe x gallery template similarity matrix. Rows are computed in
/// parallel on the current rayon pool; every cell is independent, so the
/// output does not depend on scheduling.
pub fn run_identification(
    split: &Split,
    reps: &HashMap<String, RepresentationSet>,
    config: &FusionConfig,
) -> Result<ScoreMatrix, ProtocolError> {
    let gallery: Vec<_> = split
        .gallery
        .iter()
        .map(|t| template_reps(t, reps))
        .collect::<Result<_, _>>()?;
    let probes: Vec<_> = split
        .probes
        .iter()
        .map(|t| template_reps(t, reps))
        .collect::<Result<_, _>>()?;

    let rows: Vec<Vec<f64>> = split
        .probes
        .par_iter()
        .zip(probes.par_iter())
        .map(|(pt, pr)| {
            split
                .gallery
                .iter()
                .zip(&gallery)
                .map(|(gt, gr)| score_pair(pt, pr, gt, gr, config))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()?;

    Ok(ScoreMatrix {
        probe_ids: split.probes.iter().map(|t| t.template_id.clone()).collect(),
        gallery_ids: split.gallery.iter().map(|t| t.template_id.clone()).collect(),
        probe_subjects: split.probes.iter().map(|t| t.subject_id.clone()).collect(),
        gallery_subjects: split.gallery.iter().map(|t| t.subject_id.clone()).collect(),
        scores: rows.into_iter().flatten().collect(),
    })
}

/// Scores every listed verification pair, in input order.
pub fn run_verification(
    split: &Split,
    reps: &HashMap<String, RepresentationSet>,
    config: &FusionConfig,
) -> Result<Vec<VerificationRecord>, ProtocolError> {
    if split.verification_pairs.is_empty() {
        return Err(ProtocolError::MissingPairs(split.split_id.clone()));
    }
    let resolved: Vec<(&Template, &Template)> = split
        .verification_pairs
        .iter()
        .map(|(a, b)| {
            let find = |id: &String| {
                split.template(id).ok_or_else(|| ProtocolError::UnknownTemplate {
                    split: split.split_id.clone(),
                    template: id.clone(),
                })
            };
            Ok((find(a)?, find(b)?))
        })
        .collect::<Result<_, ProtocolError>>()?;
    for (a, b) in &resolved {
        template_reps(a, reps)?;
        template_reps(b, reps)?;
    }
    resolved
        .par_iter()
        .map(|(a, b)| {
            let ra = template_reps(a, reps)?;
            let rb = template_reps(b, reps)?;
            Ok(VerificationRecord {
                template_a: a.template_id.clone(),
                template_b: b.template_id.clone(),
                score: score_pair(a, &ra, b, &rb, config)?,
                same_subject: a.subject_id == b.subject_id,
            })
        })
        .collect()
}

/// `{:.16e}` prints 17 significant digits, enough to round-trip any f64.
fn format_score(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `probe_template_id,gallery_template_id,score`, row-major.
pub fn write_score_matrix<W: Write>(writer: W, m: &ScoreMatrix) -> Result<(), ProtocolError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["probe_template_id", "gallery_template_id", "score"])?;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            csv.write_record([&m.probe_ids[i], &m.gallery_ids[j], &format_score(m.get(i, j))])?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn read_score_rows<R: Read>(reader: R) -> Result<Vec<ScoreRow>, ProtocolError> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["probe_template_id", "gallery_template_id", "score"] {
        return Err(ProtocolError::ScoreTable(format!("unexpected header {headers:?}")));
    }
    csv.records()
        .map(|row| {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let score: f64 = row[2]
                .parse()
                .map_err(|_| ProtocolError::ScoreTable(format!("line {line}: bad score {:?}", &row[2])))?;
            Ok(ScoreRow {
                probe: row[0].to_string(),
                gallery: row[1].to_string(),
                score,
            })
        })
        .collect()
}

/// Writes `template_a,template_b,score,same_subject`.
pub fn write_verification<W: Write>(
    writer: W,
    records: &[VerificationRecord],
) -> Result<(), ProtocolError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["template_a", "template_b", "score", "same_subject"])?;
    for r in records {
        csv.write_record([
            r.template_a.as_str(),
            r.template_b.as_str(),
            &format_score(r.score),
            if r.same_subject { "true" } else { "false" },
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_verification_rows<R: Read>(reader: R) -> Result<Vec<VerificationRecord>, ProtocolError> {
    let mut csv = csv::Reader::from_reader(reader);
    csv.records()
        .map(|row| {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |what: &str| ProtocolError::ScoreTable(format!("line {line}: bad {what}"));
            if row.len() != 4 {
                return Err(bad("field count"));
            }
            Ok(VerificationRecord {
                template_a: row[0].to_string(),
                template_b: row[1].to_string(),
                score: row[2].parse().map_err(|_| bad("score"))?,
                same_subject: row[3].parse().map_err(|_| bad("same_subject flag"))?,
            })
        })
        .collect()
}
