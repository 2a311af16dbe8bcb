//! Verification and identification metrics over score outputs.
//!
//! Acceptance is non-strict: a pair is accepted when `score >= threshold`.
//! The ROC is the empirical step function, never interpolated.

use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::{ScoreMatrix, VerificationRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{0} score list is empty")]
    EmptyScores(&'static str),
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("probe {0:?} has no mated gallery template")]
    UnmatedProbe(String),
    #[error("probe {probe:?} has {count} mated gallery templates")]
    MultipleMates { probe: String, count: usize },
    #[error("score matrix has no gallery columns")]
    EmptyGallery,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

/// Operating points sorted by threshold, highest first.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }
}

fn check_finite(scores: &[f64]) -> Result<(), MetricsError> {
    match scores.iter().find(|s| !s.is_finite()) {
        Some(&s) => Err(MetricsError::NonFinite(s)),
        None => Ok(()),
    }
}

/// One operating point per distinct score value.
pub fn roc_curve(genuine: &[f64], impostor: &[f64]) -> Result<RocCurve, MetricsError> {
    if genuine.is_empty() {
        return Err(MetricsError::EmptyScores("genuine"));
    }
    if impostor.is_empty() {
        return Err(MetricsError::EmptyScores("impostor"));
    }
    check_finite(genuine)?;
    check_finite(impostor)?;

    // (score, is_genuine), descending by score.
    let mut all: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&s| (s, true))
        .chain(impostor.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    let (mut g, mut i) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut k = 0;
    while k < all.len() {
        let t = all[k].0;
        // -0.0 and 0.0 are one threshold under `>=`.
        while k < all.len() && all[k].0 == t {
            if all[k].1 {
                g += 1;
            } else {
                i += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: i as f64 / ni,
            tar: g as f64 / ng,
        });
    }
    Ok(RocCurve { points })
}

/// TAR at the lowest threshold whose FAR stays within `far_target`, i.e.
/// the best TAR reachable without exceeding the target; 0 if even the
/// highest threshold exceeds it.
pub fn tar_at_far(curve: &RocCurve, far_target: f64) -> f64 {
    curve
        .points
        .iter()
        .take_while(|p| p.far <= far_target)
        .last()
        .map_or(0.0, |p| p.tar)
}

/// FAR at the highest threshold whose TAR reaches `tar_target`, i.e. the
/// lowest FAR achieving the target; 1 if it is never reached.
pub fn far_at_tar(curve: &RocCurve, tar_target: f64) -> f64 {
    curve
        .points
        .iter()
        .find(|p| p.tar >= tar_target)
        .map_or(1.0, |p| p.far)
}

/// Rank-k identification rates for k = 1..=N_gallery. Every probe must
/// have exactly one mated column. Ties count against the probe: its rank is
/// one plus the number of non-mated scores greater than or equal to the
/// mated score.
pub fn cmc(matrix: &ScoreMatrix) -> Result<Vec<f64>, MetricsError> {
    let n = matrix.cols();
    if n == 0 {
        return Err(MetricsError::EmptyGallery);
    }
    check_finite(&matrix.scores)?;
    let mut hits = vec![0usize; n];
    for p in 0..matrix.rows() {
        let mates = matrix.mates(p);
        let mate = match mates.as_slice() {
            [m] => *m,
            [] => return Err(MetricsError::UnmatedProbe(matrix.probe_ids[p].clone())),
            _ => {
                return Err(MetricsError::MultipleMates {
                    probe: matrix.probe_ids[p].clone(),
                    count: mates.len(),
                })
            }
        };
        let row = matrix.row(p);
        let mated = row[mate];
        let above = row
            .iter()
            .enumerate()
            .filter(|&(j, &s)| j != mate && s >= mated)
            .count();
        hits[above] += 1;
    }
    let probes = matrix.rows().max(1) as f64;
    let mut acc = 0;
    Ok(hits
        .into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / probes
        })
        .collect())
}

pub const REPORT_FAR_TARGETS: [f64; 2] = [0.01, 0.1];
pub const REPORT_TAR_TARGETS: [f64; 2] = [0.85, 0.95];
pub const REPORT_RANKS: [usize; 3] = [1, 5, 10];

/// Metrics for one split. Verification rows come from the listed template
/// pairs, search rows from the probe x gallery matrix. Rows that cannot be
/// computed (no pairs, no impostors, no mated probes) hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMetrics {
    pub split_id: String,
    pub rows: Vec<(String, Option<f64>)>,
}

impl SplitMetrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }
}

fn operating_rows(prefix: &str, curve: Option<&RocCurve>, rows: &mut Vec<(String, Option<f64>)>) {
    for far in REPORT_FAR_TARGETS {
        rows.push((format!("{prefix} TAR@FAR={far}"), curve.map(|c| tar_at_far(c, far))));
    }
    for tar in REPORT_TAR_TARGETS {
        rows.push((format!("{prefix} FAR@TAR={tar}"), curve.map(|c| far_at_tar(c, tar))));
    }
    // Miss rate at the usual false-alarm levels, reported high FAR first.
    for far in REPORT_FAR_TARGETS.iter().rev() {
        rows.push((
            format!("{prefix} MISS@FAR={far}"),
            curve.map(|c| 1.0 - tar_at_far(c, *far)),
        ));
    }
}

/// Computes every report row for one split.
pub fn split_metrics(
    split_id: &str,
    verification: Option<&[VerificationRecord]>,
    identification: &ScoreMatrix,
) -> Result<SplitMetrics, MetricsError> {
    let mut rows = Vec::new();

    let verify_curve = match verification {
        Some(recs) => {
            let (g, i): (Vec<_>, Vec<_>) = recs.iter().partition(|r| r.same_subject);
            let g: Vec<f64> = g.iter().map(|r| r.score).collect();
            let i: Vec<f64> = i.iter().map(|r| r.score).collect();
            optional_curve(&g, &i)?
        }
        None => None,
    };
    operating_rows("verify", verify_curve.as_ref(), &mut rows);

    let (g, i) = identification.genuine_impostor();
    let search_curve = optional_curve(&g, &i)?;
    operating_rows("search", search_curve.as_ref(), &mut rows);

    let mated = identification.mated_only();
    let ranks = if mated.rows() > 0 && mated.cols() > 0 {
        Some(cmc(&mated)?)
    } else {
        None
    };
    for k in REPORT_RANKS {
        // Past the gallery size every mated probe is found.
        let v = ranks.as_ref().map(|r| r[k.min(r.len()) - 1]);
        rows.push((format!("RANK@{k}"), v));
    }
    Ok(SplitMetrics {
        split_id: split_id.to_string(),
        rows,
    })
}

fn optional_curve(genuine: &[f64], impostor: &[f64]) -> Result<Option<RocCurve>, MetricsError> {
    if genuine.is_empty() || impostor.is_empty() {
        check_finite(genuine)?;
        check_finite(impostor)?;
        return Ok(None);
    }
    roc_curve(genuine, impostor).map(Some)
}

/// Per-split metrics plus their mean, in a fixed row order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub splits: Vec<SplitMetrics>,
}

impl MetricsReport {
    pub fn new(splits: Vec<SplitMetrics>) -> Self {
        MetricsReport { splits }
    }

    pub fn row_names(&self) -> Vec<&str> {
        self.splits
            .first()
            .map(|s| s.rows.iter().map(|(n, _)| n.as_str()).collect())
            .unwrap_or_default()
    }

    /// Mean over the splits where the row is defined.
    pub fn mean(&self, name: &str) -> Option<f64> {
        let vals: Vec<f64> = self.splits.iter().filter_map(|s| s.get(name)).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    /// `metric,<split>...,mean`; undefined cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for s in &self.splits {
            out.push(',');
            out.push_str(&s.split_id);
        }
        out.push_str(",mean\n");
        for name in self.row_names() {
            out.push_str(name);
            for s in &self.splits {
                out.push(',');
                if let Some(v) = s.get(name) {
                    let _ = write!(out, "{v}");
                }
            }
            out.push(',');
            if let Some(v) = self.mean(name) {
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let names = self.row_names();
        let width = names.iter().map(|n| n.len()).max().unwrap_or(6).max(6);
        let cols: Vec<String> = self
            .splits
            .iter()
            .map(|s| s.split_id.clone())
            .chain(std::iter::once("mean".to_string()))
            .collect();
        let cw = cols.iter().map(|c| c.len()).max().unwrap_or(0).max(7);
        let mut out = format!("{:<width$}", "metric");
        for c in &cols {
            let _ = write!(out, "  {c:>cw$}");
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        for name in names {
            let _ = write!(out, "{name:<width$}");
            for s in &self.splits {
                let _ = write!(out, "  {:>cw$}", cell(s.get(name)));
            }
            let _ = write!(out, "  {:>cw$}", cell(self.mean(name)));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_roc(genuine: &[f64], impostor: &[f64]) -> Vec<RocPoint> {
        let mut t: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
        t.sort_by(|a, b| b.total_cmp(a));
        t.dedup_by(|a, b| a == b);
        t.into_iter()
            .map(|t| RocPoint {
                threshold: t,
                far: impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64,
                tar: genuine.iter().filter(|&&s| s >= t).count() as f64 / genuine.len() as f64,
            })
            .collect()
    }

    fn brute_tar_at_far(g: &[f64], i: &[f64], target: f64) -> f64 {
        let mut best: Option<(f64, f64)> = None;
        for p in brute_roc(g, i) {
            if p.far <= target && best.is_none_or(|(t, _)| p.threshold < t) {
                best = Some((p.threshold, p.tar));
            }
        }
        best.map_or(0.0, |b| b.1)
    }

    fn brute_far_at_tar(g: &[f64], i: &[f64], target: f64) -> f64 {
        let mut best: Option<(f64, f64)> = None;
        for p in brute_roc(g, i) {
            if p.tar >= target && best.is_none_or(|(t, _)| p.threshold > t) {
                best = Some((p.threshold, p.far));
            }
        }
        best.map_or(1.0, |b| b.1)
    }

    fn brute_cmc(m: &ScoreMatrix) -> Vec<f64> {
        let n = m.cols();
        let mut out = vec![0.0; n];
        for p in 0..m.rows() {
            let mate = m.mates(p)[0];
            // Sort the row, placing the mate after every equal score.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                m.get(p, b)
                    .total_cmp(&m.get(p, a))
                    .then((a == mate).cmp(&(b == mate)))
            });
            let rank = order.iter().position(|&j| j == mate).unwrap() + 1;
            for k in rank..=n {
                out[k - 1] += 1.0;
            }
        }
        out.iter().map(|c| c / m.rows() as f64).collect()
    }

    fn random_scores(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> Vec<f64> {
        (0..n)
            .map(|_| {
                if ties {
                    (rng.random_range(0..20) as f64) / 20.0
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect()
    }

    fn matrix(scores: Vec<f64>, rows: usize, cols: usize, mates: &[usize]) -> ScoreMatrix {
        ScoreMatrix {
            probe_ids: (0..rows).map(|i| format!("p{i}")).collect(),
            gallery_ids: (0..cols).map(|j| format!("g{j}")).collect(),
            probe_subjects: mates.iter().map(|m| format!("S{m}")).collect(),
            gallery_subjects: (0..cols).map(|j| format!("S{j}")).collect(),
            scores,
        }
    }

    #[test]
    fn perfect_separation() {
        let c = roc_curve(&[0.9], &[0.1]).unwrap();
        assert_eq!(c.points()[0], RocPoint { threshold: 0.9, far: 0.0, tar: 1.0 });
        assert_eq!(tar_at_far(&c, 0.01), 1.0);
        assert_eq!(far_at_tar(&c, 0.85), 0.0);
        let last = c.points().last().unwrap();
        assert_eq!((last.far, last.tar), (1.0, 1.0));
    }

    #[test]
    fn inverted_scores_give_full_far() {
        let c = roc_curve(&[0.1, 0.2], &[0.5, 0.7, 0.9]).unwrap();
        assert_eq!(far_at_tar(&c, 0.85), 1.0);
        assert_eq!(tar_at_far(&c, 0.01), 0.0);
    }

    #[test]
    fn chance_curve_stays_on_diagonal() {
        let s: Vec<f64> = (0..100).map(|k| k as f64 / 100.0).collect();
        let c = roc_curve(&s, &s).unwrap();
        for p in c.points() {
            assert_eq!(p.far, p.tar);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let s = random_scores(&mut rng, 300, true);
        let c = roc_curve(&s, &s).unwrap();
        assert!(tar_at_far(&c, 0.1) <= 0.1 + 1.0 / 300.0);
    }

    #[test]
    fn empty_and_non_finite_inputs() {
        assert_eq!(roc_curve(&[], &[0.1]), Err(MetricsError::EmptyScores("genuine")));
        assert_eq!(roc_curve(&[0.1], &[]), Err(MetricsError::EmptyScores("impostor")));
        assert!(matches!(roc_curve(&[f64::NAN], &[0.1]), Err(MetricsError::NonFinite(_))));
    }

    #[test]
    fn roc_and_operating_points_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        for case in 0..60 {
            let ties = case % 2 == 0;
            let ng = rng.random_range(1..200);
            let ni = rng.random_range(1..200);
            let g = random_scores(&mut rng, ng, ties);
            let i = random_scores(&mut rng, ni, ties);
            let c = roc_curve(&g, &i).unwrap();
            assert_eq!(c.points(), brute_roc(&g, &i).as_slice());
            for target in [0.001, 0.01, 0.1, 0.5, 0.85, 0.95, 1.0] {
                assert_eq!(tar_at_far(&c, target), brute_tar_at_far(&g, &i, target));
                assert_eq!(far_at_tar(&c, target), brute_far_at_tar(&g, &i, target));
            }
        }
    }

    #[test]
    fn cmc_trivial_cases() {
        // Mated column strictly highest.
        let m = matrix(vec![0.9, 0.1, 0.2, 0.8], 2, 2, &[0, 1]);
        assert_eq!(cmc(&m).unwrap(), vec![1.0, 1.0]);
        // Mated always second.
        let m = matrix(vec![0.5, 0.9, 0.9, 0.5], 2, 2, &[0, 1]);
        assert_eq!(cmc(&m).unwrap(), vec![0.0, 1.0]);
        // A tie goes against the probe.
        let m = matrix(vec![0.5, 0.5], 1, 2, &[0]);
        assert_eq!(cmc(&m).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn cmc_mate_errors() {
        let mut m = matrix(vec![0.5, 0.5], 1, 2, &[7]);
        assert!(matches!(cmc(&m), Err(MetricsError::UnmatedProbe(_))));
        m.gallery_subjects = vec!["S7".into(), "S7".into()];
        assert!(matches!(cmc(&m), Err(MetricsError::MultipleMates { count: 2, .. })));
    }

    #[test]
    fn cmc_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        for case in 0..50 {
            let (rows, cols) = (20, 10);
            let scores = random_scores(&mut rng, rows * cols, case % 2 == 0);
            let mates: Vec<usize> = (0..rows).map(|_| rng.random_range(0..cols)).collect();
            let m = matrix(scores, rows, cols, &mates);
            let c = cmc(&m).unwrap();
            assert_eq!(c, brute_cmc(&m));
            assert!(c.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*c.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn report_mean_of_identical_splits() {
        let m = matrix(vec![0.9, 0.1, 0.2, 0.8], 2, 2, &[0, 1]);
        let recs = vec![
            VerificationRecord { template_a: "a".into(), template_b: "b".into(), score: 0.9, same_subject: true },
            VerificationRecord { template_a: "a".into(), template_b: "c".into(), score: 0.2, same_subject: false },
        ];
        let one = split_metrics("1", Some(&recs), &m).unwrap();
        assert_eq!(one.get("RANK@1"), Some(1.0));
        assert_eq!(one.get("RANK@10"), Some(1.0));
        assert_eq!(one.get("verify TAR@FAR=0.01"), Some(1.0));
        assert_eq!(one.get("search MISS@FAR=0.1"), Some(0.0));
        let mut two = one.clone();
        two.split_id = "2".into();
        let report = MetricsReport::new(vec![one.clone(), two]);
        for name in report.row_names() {
            assert_eq!(report.mean(name), one.get(name));
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("metric,1,2,mean\n"));
        assert_eq!(csv.lines().count(), 1 + report.row_names().len());
        assert!(report.to_table().contains("RANK@5"));

        let no_pairs = split_metrics("3", None, &m).unwrap();
        assert_eq!(no_pairs.get("verify TAR@FAR=0.01"), None);
        assert!(MetricsReport::new(vec![no_pairs]).to_csv().contains("verify TAR@FAR=0.01,,\n"));
    }

    proptest! {
        #[test]
        fn monotone_transform_keeps_rates(
            g in proptest::collection::vec(-3.0f64..3.0, 1..60),
            i in proptest::collection::vec(-3.0f64..3.0, 1..60),
        ) {
            let a = roc_curve(&g, &i).unwrap();
            let f = |v: &f64| (v * 0.7).exp() + 2.0;
            let b = roc_curve(&g.iter().map(f).collect::<Vec<_>>(), &i.iter().map(f).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(a.points().len(), b.points().len());
            for (p, q) in a.points().iter().zip(b.points()) {
                prop_assert_eq!((p.far, p.tar), (q.far, q.tar));
            }
            for w in a.points().windows(2) {
                prop_assert!(w[0].threshold > w[1].threshold);
                prop_assert!(w[0].far <= w[1].far && w[0].tar <= w[1].tar);
            }
        }

        #[test]
        fn cmc_invariant_under_monotone_transform(
            scores in proptest::collection::vec(0u8..6, 12),
            mates in proptest::collection::vec(0usize..4, 3),
        ) {
            let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
            let a = cmc(&matrix(s.clone(), 3, 4, &mates)).unwrap();
            let b = cmc(&matrix(s.iter().map(|v| v.powi(3) - 5.0).collect(), 3, 4, &mates)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
