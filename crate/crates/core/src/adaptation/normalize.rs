use super::{project_pca, AdaptationError, PcaModel};
use crate::features::FeatureVector;

/// `f / ||f||_2`; the zero vector is returned unchanged.
pub fn l2_normalize(f: &FeatureVector) -> FeatureVector {
    let norm = f.norm();
    if norm > 0.0 {
        f.map_values(f.values().iter().map(|v| v / norm).collect())
    } else {
        f.clone()
    }
}

/// Signed power `sign(v) |v|^alpha`, elementwise.
pub fn power_normalize(f: &FeatureVector, alpha: f64) -> Result<FeatureVector, AdaptationError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AdaptationError::InvalidParameter(format!(
            "power alpha must be in (0, 1], got {alpha}"
        )));
    }
    if alpha == 1.0 {
        return Ok(f.clone());
    }
    Ok(f.map_values(
        f.values()
            .iter()
            .map(|&v| {
                let mag = if alpha == 0.5 { v.abs().sqrt() } else { v.abs().powf(alpha) };
                v.signum() * mag
            })
            .collect(),
    ))
}

/// Adaptation chain applied to every feature: PCA projection, then power
/// normalization, then L2 normalization.
#[derive(Debug, Clone)]
pub struct PostProcess {
    pub model: PcaModel,
    pub alpha: f64,
}

impl PostProcess {
    pub fn apply(&self, f: &FeatureVector) -> Result<FeatureVector, AdaptationError> {
        let projected = project_pca(&self.model, f)?;
        Ok(l2_normalize(&power_normalize(&projected, self.alpha)?))
    }
}
