use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::AdaptationError;
use crate::features::FeatureVector;

pub const DEFAULT_RETENTION: f64 = 0.95;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-12;

/// Which eigenproblem [`fit_pca_with`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcaSolver {
    /// Dual when there are fewer samples than dimensions, direct otherwise.
    #[default]
    Auto,
    /// Eigendecomposition of the d x d sample covariance.
    Direct,
    /// Eigendecomposition of the n x n Gram matrix of centred samples.
    Dual,
}

/// A fitted PCA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub(crate) pipeline_id: String,
    pub(crate) mean: DVector<f64>,
    /// d x m, orthonormal columns.
    pub(crate) basis: DMatrix<f64>,
    pub(crate) eigenvalues: Vec<f64>,
    pub(crate) retention: f64,
    pub(crate) total_variance: f64,
}

impl PcaModel {
    pub fn pipeline_id(&self) -> &str {
        &self.pipeline_id
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn retention(&self) -> f64 {
        self.retention
    }

    /// Trace of the sample covariance.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn variance_fraction_kept(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.total_variance
    }
}

/// Fits PCA keeping the smallest number of components whose eigenvalues
/// sum to at least `retention` of the total variance.
pub fn fit_pca(features: &[FeatureVector], retention: f64) -> Result<PcaModel, AdaptationError> {
    fit_pca_with(features, retention, PcaSolver::Auto)
}

pub fn fit_pca_with(
    features: &[FeatureVector],
    retention: f64,
    solver: PcaSolver,
) -> Result<PcaModel, AdaptationError> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(AdaptationError::InvalidParameter(format!(
            "retention must be in (0, 1], got {retention}"
        )));
    }
    let n = features.len();
    if n < 2 {
        return Err(AdaptationError::TooFewSamples(n));
    }
    let d = features[0].dim();
    let pipeline_id = features[0].pipeline_id().to_string();
    for f in features {
        if f.dim() != d {
            return Err(AdaptationError::DimMismatch(format!(
                "sample dims {} and {d}",
                f.dim()
            )));
        }
        if f.pipeline_id() != pipeline_id {
            return Err(AdaptationError::PipelineMismatch(
                pipeline_id,
                f.pipeline_id().to_string(),
            ));
        }
    }

    // fixed summation order: samples in input order
    let mut mean = DVector::<f64>::zeros(d);
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v;
        }
    }
    mean /= n as f64;

    let mut centered = DMatrix::<f64>::zeros(n, d);
    for (i, f) in features.iter().enumerate() {
        for (j, v) in f.values().iter().enumerate() {
            centered[(i, j)] = v - mean[j];
        }
    }
    let denom = (n - 1) as f64;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;
    if total_variance.is_nan() || total_variance <= 0.0 {
        return Err(AdaptationError::ZeroVariance);
    }

    let use_dual = match solver {
        PcaSolver::Auto => n - 1 < d,
        PcaSolver::Direct => false,
        PcaSolver::Dual => true,
    };
    let (values, vectors) = if use_dual {
        dual_eigen(&centered, denom)
    } else {
        direct_eigen(&centered, denom)
    };

    let max = values.first().copied().unwrap_or(0.0);
    let positive = values
        .iter()
        .take_while(|&&v| v > max * RANK_TOLERANCE && v > 0.0)
        .count();
    if positive == 0 {
        return Err(AdaptationError::ZeroVariance);
    }
    let target = retention * total_variance;
    let mut cum = 0.0;
    let mut m = positive;
    for (k, v) in values[..positive].iter().enumerate() {
        cum += v;
        if cum >= target {
            m = k + 1;
            break;
        }
    }

    let mut basis = vectors.columns(0, m).into_owned();
    for mut col in basis.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }

    Ok(PcaModel {
        pipeline_id,
        mean,
        basis,
        eigenvalues: values[..m].to_vec(),
        retention,
        total_variance,
    })
}

/// Sorted (descending) eigenpairs of a symmetric matrix.
fn sorted_eigen(sym: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

fn direct_eigen(centered: &DMatrix<f64>, denom: f64) -> (Vec<f64>, DMatrix<f64>) {
    let cov = centered.transpose() * centered / denom;
    sorted_eigen(cov)
}

/// Eigenpairs of the covariance recovered from the Gram matrix: if
/// `G u = l u` with `G = X X^T / (n-1)`, then `v = X^T u / sqrt((n-1) l)`
/// is a unit eigenvector of `X^T X / (n-1)` with the same eigenvalue.
fn dual_eigen(centered: &DMatrix<f64>, denom: f64) -> (Vec<f64>, DMatrix<f64>) {
    let gram = centered * centered.transpose() / denom;
    let (values, u) = sorted_eigen(gram);
    let mut vectors = DMatrix::<f64>::zeros(centered.ncols(), values.len());
    for (k, &l) in values.iter().enumerate() {
        if l > 0.0 {
            let v = centered.transpose() * u.column(k) / (denom * l).sqrt();
            vectors.set_column(k, &v);
        }
    }
    (values, vectors)
}

/// `basis^T (f - mean)`, keeping the pipeline tag.
pub fn project_pca(model: &PcaModel, f: &FeatureVector) -> Result<FeatureVector, AdaptationError> {
    if f.dim() != model.dim() {
        return Err(AdaptationError::DimMismatch(format!(
            "feature dim {} vs model dim {}",
            f.dim(),
            model.dim()
        )));
    }
    let centered = DVector::from_iterator(
        f.dim(),
        f.values().iter().zip(model.mean.iter()).map(|(v, m)| v - m),
    );
    let projected = model.basis.tr_mul(&centered);
    Ok(f.map_values(projected.iter().copied().collect()))
}
