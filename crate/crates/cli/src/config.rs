//! Run configuration: one TOML section per pipeline.
//!
//! ```toml
//! [fusion]
//! beta = 10.0
//!
//! [pipeline.HLBP]
//! extractor = "hdlbp"
//! reference = "avg-all-face-lmd"   # built-in name or a .ref file
//! features = "features/HLBP.mpfv"
//! crops = "crops/HLBP"
//! retention = 0.95
//! alpha = 0.5
//!
//! [pipeline.HLBP.hdlbp]
//! grid_cols = 8
//! grid_rows = 10
//! patch_size = 15
//! histogram = "raw"                  # or "uniform"
//!
//! [pipeline.frontal]
//! extractor = "external"
//! source = "embeddings/frontal.mpfv"
//! features = "features/frontal.mpfv"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use multipose::adaptation::DEFAULT_RETENTION;
use multipose::features::{ExtractorConfig, HistogramKind};
use multipose::geometry::{builtin_reference, ReferenceModel};
use multipose::matching::{FusionConfig, DEFAULT_BETA};
use serde::{Deserialize, Serialize};

use crate::DataError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection { beta: DEFAULT_BETA }
    }
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_retention() -> f64 {
    DEFAULT_RETENTION
}

fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Hdlbp,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdlbpSection {
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub patch_size: usize,
    #[serde(default)]
    pub histogram: HistogramName,
}

impl Default for HdlbpSection {
    fn default() -> Self {
        HdlbpSection {
            grid_cols: 8,
            grid_rows: 10,
            patch_size: 15,
            histogram: HistogramName::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramName {
    #[default]
    Raw,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub extractor: ExtractorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hdlbp: Option<HdlbpSection>,
    /// External embeddings to import.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    /// Feature file written by `extract` and read by later stages.
    pub features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crops: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default = "default_retention")]
    pub retention: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub pipeline: BTreeMap<String, PipelineSection>,
}

/// A pipeline with every path resolved.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub id: String,
    pub section: PipelineSection,
    pub features: PathBuf,
    pub crops: PathBuf,
    pub model: PathBuf,
    pub source: Option<PathBuf>,
    base: PathBuf,
}

impl Pipeline {
    pub fn is_hdlbp(&self) -> bool {
        self.section.extractor == ExtractorKind::Hdlbp
    }

    pub fn reference(&self) -> anyhow::Result<ReferenceModel> {
        let name = self.section.reference.as_deref().unwrap_or("avg-all-face-lmd");
        load_reference(name, &self.base)
    }

    pub fn extractor(&self) -> anyhow::Result<ExtractorConfig> {
        let h = self.section.hdlbp.clone().unwrap_or_default();
        let reference = self.reference()?;
        let kind = match h.histogram {
            HistogramName::Raw => HistogramKind::Raw,
            HistogramName::Uniform => HistogramKind::Uniform,
        };
        ExtractorConfig::grid(
            h.grid_cols,
            h.grid_rows,
            reference.crop_width(),
            reference.crop_height(),
            h.patch_size,
            kind,
        )
        .with_context(|| format!("pipeline {:?}: bad hdlbp settings", self.id))
        .map_err(DataError::wrap)
    }
}

/// Built-in reference name, or a path to a reference file.
pub fn load_reference(name: &str, base: &Path) -> anyhow::Result<ReferenceModel> {
    if let Some(r) = builtin_reference(name) {
        return Ok(r);
    }
    let path = resolve(base, Path::new(name));
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading reference model {}", path.display()))
        .map_err(DataError::wrap)?;
    text.parse::<ReferenceModel>()
        .with_context(|| format!("parsing reference model {}", path.display()))
        .map_err(DataError::wrap)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<(RunConfig, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(DataError::wrap)?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(DataError::wrap)?;
        config.validate().map_err(DataError::wrap)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.pipeline.is_empty() {
            bail!("config declares no [pipeline.<id>] sections");
        }
        FusionConfig::new(self.fusion.beta).context("fusion.beta")?;
        for (id, p) in &self.pipeline {
            if !(p.retention > 0.0 && p.retention <= 1.0) {
                bail!("pipeline {id:?}: retention must be in (0, 1]");
            }
            if !(p.alpha > 0.0 && p.alpha <= 1.0) {
                bail!("pipeline {id:?}: alpha must be in (0, 1]");
            }
            match p.extractor {
                ExtractorKind::External if p.source.is_none() => {
                    bail!("pipeline {id:?}: external extractor needs `source`")
                }
                ExtractorKind::Hdlbp if p.source.is_some() => {
                    bail!("pipeline {id:?}: `source` only applies to external extractors")
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig::new(self.fusion.beta).expect("validated")
    }

    /// Resolved pipelines in id order, optionally restricted to one id.
    pub fn pipelines(&self, base: &Path, only: Option<&str>) -> anyhow::Result<Vec<Pipeline>> {
        if let Some(id) = only {
            if !self.pipeline.contains_key(id) {
                return Err(DataError::wrap(anyhow::anyhow!("config has no pipeline {id:?}")));
            }
        }
        Ok(self
            .pipeline
            .iter()
            .filter(|(id, _)| only.is_none_or(|o| o == id.as_str()))
            .map(|(id, s)| Pipeline {
                id: id.clone(),
                features: resolve(base, &s.features),
                crops: resolve(base, s.crops.as_deref().unwrap_or(&Path::new("crops").join(id))),
                model: resolve(base, s.model.as_deref().unwrap_or(&Path::new("models").join(format!("{id}.mpca")))),
                source: s.source.as_deref().map(|p| resolve(base, p)),
                section: s.clone(),
                base: base.to_path_buf(),
            })
            .collect())
    }
}

/// Config for a single HDLBP pipeline with default settings.
pub fn hdlbp_config(id: &str, reference: &str) -> RunConfig {
    let mut c = RunConfig::default();
    c.pipeline.insert(
        id.to_string(),
        PipelineSection {
            extractor: ExtractorKind::Hdlbp,
            reference: Some(reference.to_string()),
            hdlbp: Some(HdlbpSection::default()),
            source: None,
            features: PathBuf::from(format!("features/{id}.mpfv")),
            crops: None,
            model: None,
            retention: DEFAULT_RETENTION,
            alpha: default_alpha(),
        },
    );
    c
}

/// Config importing external embedding files, one pipeline per file.
pub fn external_config(pipelines: &[(&str, &Path)]) -> RunConfig {
    let mut c = RunConfig::default();
    for (id, source) in pipelines {
        c.pipeline.insert(
            id.to_string(),
            PipelineSection {
                extractor: ExtractorKind::External,
                reference: None,
                hdlbp: None,
                source: Some(source.to_path_buf()),
                features: PathBuf::from(format!("features/{id}.mpfv")),
                crops: None,
                model: None,
                retention: DEFAULT_RETENTION,
                alpha: default_alpha(),
            },
        );
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example_and_applies_defaults() {
        let text = r#"
[pipeline.HLBP]
extractor = "hdlbp"
features = "f/HLBP.mpfv"

[pipeline.HLBP.hdlbp]
grid_cols = 4
grid_rows = 5
patch_size = 9
histogram = "uniform"

[pipeline.ext]
extractor = "external"
source = "/abs/e.mpfv"
features = "f/ext.mpfv"
alpha = 1.0
"#;
        let c: RunConfig = toml::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.fusion.beta, DEFAULT_BETA);
        let ps = c.pipelines(Path::new("/base"), None).unwrap();
        assert_eq!(ps.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["HLBP", "ext"]);
        assert_eq!(ps[0].features, Path::new("/base/f/HLBP.mpfv"));
        assert_eq!(ps[0].crops, Path::new("/base/crops/HLBP"));
        assert_eq!(ps[1].source.as_deref(), Some(Path::new("/abs/e.mpfv")));
        assert_eq!(ps[0].section.retention, DEFAULT_RETENTION);
        let e = ps[0].extractor().unwrap();
        assert_eq!(e.dim(), 4 * 5 * 59);
        assert!(c.pipelines(Path::new("."), Some("nope")).is_err());
    }

    #[test]
    fn rejects_bad_sections() {
        for bad in [
            "[pipeline.a]\nextractor = \"external\"\nfeatures = \"x\"\n",
            "[pipeline.a]\nextractor = \"hdlbp\"\nfeatures = \"x\"\nretention = 1.5\n",
            "[pipeline.a]\nextractor = \"hdlbp\"\nfeatures = \"x\"\ncolour = 1\n",
            "[fusion]\nbeta = -1.0\n[pipeline.a]\nextractor = \"hdlbp\"\nfeatures = \"x\"\n",
            "",
        ] {
            let parsed: Result<RunConfig, _> = toml::from_str(bad);
            assert!(parsed.map_or(true, |c| c.validate().is_err()), "{bad}");
        }
    }

    #[test]
    fn generated_configs_round_trip() {
        let c = hdlbp_config("HLBP", "avg-all-face-lmd");
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let c = external_config(&[("frontal", Path::new("e/frontal.mpfv"))]);
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
