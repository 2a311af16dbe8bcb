use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use multipose::adaptation::{fit_pca, read_pca, write_pca, PcaModel, PostProcess};
use multipose::features::{extract_hdlbp, load_embeddings, write_features, FeatureVector};
use multipose::geometry::align as align_face;
use multipose::matching::RepresentationSet;
use multipose::metrics::{split_metrics, MetricsReport};
use multipose::protocol::{
    build_templates, load_manifest, load_split, read_score_rows, read_verification_rows,
    run_identification, run_verification, write_manifest, write_score_matrix, write_verification,
    MediaRecord, ScoreMatrix, Split, Template,
};
use multipose::synthetic::{face_corpus, pose_corpus, FaceCorpusConfig, PoseCorpusConfig, POSE_PIPELINES};
use rayon::prelude::*;

use crate::config::{external_config, hdlbp_config, Pipeline, RunConfig};
use crate::io::{read_png, write_atomic, write_png, write_text};
use crate::{
    AdaptArgs, AlignArgs, DataError, EvaluateArgs, ExtractArgs, MetricsArgs, ScoreArgs,
    SyntheticArgs, SyntheticKind, UsageError,
};

pub const TRANSFORM_LOG: &str = "transforms.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const VERIFICATION_FILE: &str = "verification.csv";

fn read_manifest_file(path: &Path) -> anyhow::Result<Vec<MediaRecord>> {
    load_manifest(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Picks the `--out` target, which is only meaningful for one pipeline.
fn single_override<'a>(
    out: Option<&'a Path>,
    pipelines: &[Pipeline],
) -> anyhow::Result<Option<&'a Path>> {
    match out {
        Some(_) if pipelines.len() != 1 => Err(anyhow::Error::new(UsageError(
            "--out needs exactly one pipeline; pass --pipeline".into(),
        ))),
        o => Ok(o),
    }
}

/// Crop file name for an image id; ids must be plain file names.
fn crop_name(image_id: &str) -> anyhow::Result<String> {
    if image_id.contains(['/', '\\']) || image_id == "." || image_id == ".." {
        return Err(DataError::wrap(anyhow!("image id {image_id:?} is not a valid file name")));
    }
    Ok(format!("{image_id}.png"))
}

struct AlignOutcome {
    image_id: String,
    result: Result<(f64, f64, f64, f64), String>,
}

pub fn align(args: &AlignArgs) -> anyhow::Result<()> {
    let (config, base) = RunConfig::load(&args.config)?;
    let pipelines: Vec<Pipeline> = config
        .pipelines(&base, args.pipeline.as_deref())?
        .into_iter()
        .filter(Pipeline::is_hdlbp)
        .collect();
    if pipelines.is_empty() {
        return Err(DataError::wrap(anyhow!("no hdlbp pipeline to align for")));
    }
    let out = single_override(args.out.as_deref(), &pipelines)?;
    let records = read_manifest_file(&args.manifest)?;
    let root = manifest_dir(&args.manifest);

    for p in &pipelines {
        let reference = p.reference()?;
        let dir = out.map_or_else(|| p.crops.clone(), Path::to_path_buf);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let outcomes: Vec<AlignOutcome> = records
            .par_iter()
            .map(|r| {
                let result = (|| -> anyhow::Result<_> {
                    let landmarks = r
                        .landmarks
                        .as_ref()
                        .ok_or_else(|| anyhow!("record has no landmarks"))?;
                    let name = crop_name(&r.image_id)?;
                    let image = read_png(&root.join(&r.filepath))?;
                    let (crop, t) = align_face(&image, landmarks, &reference, None)?;
                    write_png(&dir.join(name), &crop)?;
                    Ok(t.coefficients())
                })()
                .map_err(|e| format!("{e:#}"));
                AlignOutcome {
                    image_id: r.image_id.clone(),
                    result,
                }
            })
            .collect();

        let ok = outcomes.iter().filter(|o| o.result.is_ok()).count();
        write_atomic(&dir.join(TRANSFORM_LOG), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["image_id", "status", "a", "b", "tx", "ty", "message"])?;
            for o in &outcomes {
                match &o.result {
                    Ok((a, b, tx, ty)) => csv.write_record([
                        o.image_id.as_str(),
                        "ok",
                        &a.to_string(),
                        &b.to_string(),
                        &tx.to_string(),
                        &ty.to_string(),
                        "",
                    ])?,
                    Err(msg) => {
                        warn!("align {}: {msg}", o.image_id);
                        csv.write_record([o.image_id.as_str(), "failed", "", "", "", "", msg])?
                    }
                }
            }
            csv.flush()?;
            Ok(())
        })?;
        info!("pipeline {}: aligned {ok}/{} images into {}", p.id, outcomes.len(), dir.display());
        if ok == 0 {
            return Err(DataError::wrap(anyhow!(
                "pipeline {}: no image could be aligned",
                p.id
            )));
        }
    }
    Ok(())
}

fn save_features(path: &Path, features: &BTreeMap<String, FeatureVector>) -> anyhow::Result<()> {
    write_atomic(path, |w| {
        write_features(w, features.iter().map(|(k, v)| (k.as_str(), v)))?;
        Ok(())
    })
}

/// HDLBP features for every manifest image with a crop in `crops`.
pub fn extract_hdlbp_dir(
    pipeline: &Pipeline,
    records: &[MediaRecord],
    crops: &Path,
) -> anyhow::Result<BTreeMap<String, FeatureVector>> {
    let config = pipeline.extractor()?;
    let extracted: Vec<Option<(String, FeatureVector)>> = records
        .par_iter()
        .map(|r| -> anyhow::Result<_> {
            let path = crops.join(crop_name(&r.image_id)?);
            if !path.exists() {
                warn!("pipeline {}: no crop for {}", pipeline.id, r.image_id);
                return Ok(None);
            }
            let crop = read_png(&path)?;
            let f = extract_hdlbp(&crop, &config, &pipeline.id)
                .with_context(|| format!("extracting {}", path.display()))?;
            Ok(Some((r.image_id.clone(), f)))
        })
        .collect::<anyhow::Result<_>>()?;
    let features: BTreeMap<_, _> = extracted.into_iter().flatten().collect();
    if features.is_empty() {
        return Err(DataError::wrap(anyhow!(
            "pipeline {}: no crops found in {}",
            pipeline.id,
            crops.display()
        )));
    }
    Ok(features)
}

pub fn extract(args: &ExtractArgs) -> anyhow::Result<()> {
    let (config, base) = RunConfig::load(&args.config)?;
    let pipelines = config.pipelines(&base, args.pipeline.as_deref())?;
    let out = single_override(args.out.as_deref(), &pipelines)?;
    let records = read_manifest_file(&args.manifest)?;
    for p in &pipelines {
        let features = if p.is_hdlbp() {
            extract_hdlbp_dir(p, &records, &p.crops)?
        } else {
            let source = p.source.as_ref().expect("validated");
            load_embeddings(source, &p.id).with_context(|| format!("importing {}", source.display()))?
        };
        let target = out.map_or_else(|| p.features.clone(), Path::to_path_buf);
        save_features(&target, &features)?;
        info!("pipeline {}: {} vectors -> {}", p.id, features.len(), target.display());
    }
    Ok(())
}

fn load_features(p: &Pipeline) -> anyhow::Result<BTreeMap<String, FeatureVector>> {
    load_embeddings(&p.features, &p.id)
        .with_context(|| format!("pipeline {}: reading {}", p.id, p.features.display()))
}

fn resolve_split(path: &Path, templates: &[Template]) -> anyhow::Result<Split> {
    let spec = load_split(path).with_context(|| format!("reading split {}", path.display()))?;
    Split::resolve(&spec, templates).with_context(|| format!("resolving split {}", path.display()))
}

/// PCA over the features of `images` that this pipeline has.
fn fit_for(
    p: &Pipeline,
    features: &BTreeMap<String, FeatureVector>,
    images: &[&str],
) -> anyhow::Result<PcaModel> {
    let sample: Vec<FeatureVector> = images
        .iter()
        .filter_map(|id| features.get(*id).cloned())
        .collect();
    if sample.len() < images.len() {
        warn!(
            "pipeline {}: {} of {} images have no features",
            p.id,
            images.len() - sample.len(),
            images.len()
        );
    }
    Ok(fit_pca(&sample, p.section.retention)?)
}

fn save_model(path: &Path, model: &PcaModel) -> anyhow::Result<()> {
    write_atomic(path, |w| Ok(write_pca(w, model)?))
}

pub fn adapt(args: &AdaptArgs) -> anyhow::Result<()> {
    let (config, base) = RunConfig::load(&args.config)?;
    let pipelines = config.pipelines(&base, args.pipeline.as_deref())?;
    let out = single_override(args.out.as_deref(), &pipelines)?;
    let records = read_manifest_file(&args.manifest)?;
    let images: Vec<String> = match &args.split {
        Some(path) => {
            let split = resolve_split(path, &build_templates(&records)?)?;
            split.image_ids().map(str::to_string).collect()
        }
        None => records.iter().map(|r| r.image_id.clone()).collect(),
    };
    let images: Vec<&str> = images.iter().map(String::as_str).collect();
    for p in &pipelines {
        let model = fit_for(p, &load_features(p)?, &images)?;
        let target = out.map_or_else(|| p.model.clone(), Path::to_path_buf);
        save_model(&target, &model)?;
        info!(
            "pipeline {}: {} -> {} dims ({:.4} variance kept)",
            p.id,
            model.dim(),
            model.components(),
            model.variance_fraction_kept()
        );
    }
    Ok(())
}

/// Adapts every pipeline's features of the split images and groups them
/// per image.
fn representations(
    split: &Split,
    adapted: &[(&Pipeline, PostProcess, &BTreeMap<String, FeatureVector>)],
) -> anyhow::Result<HashMap<String, RepresentationSet>> {
    let images: Vec<&str> = {
        let mut ids: Vec<&str> = split.image_ids().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    images
        .par_iter()
        .filter_map(|&id| {
            let reps: anyhow::Result<Vec<FeatureVector>> = adapted
                .iter()
                .filter_map(|(p, post, feats)| {
                    feats.get(id).map(|f| {
                        post.apply(f)
                            .with_context(|| format!("pipeline {}: adapting {id}", p.id))
                    })
                })
                .collect();
            match reps {
                Ok(v) if v.is_empty() => None,
                Ok(v) => Some(RepresentationSet::new(id, v).map(|r| (id.to_string(), r)).map_err(Into::into)),
                Err(e) => Some(Err(e)),
            }
        })
        .collect()
}

fn write_scores(
    dir: &Path,
    matrix: &ScoreMatrix,
    pairs: Option<&[multipose::protocol::VerificationRecord]>,
) -> anyhow::Result<()> {
    write_atomic(&dir.join(SCORES_FILE), |w| Ok(write_score_matrix(w, matrix)?))?;
    if let Some(pairs) = pairs {
        write_atomic(&dir.join(VERIFICATION_FILE), |w| Ok(write_verification(w, pairs)?))?;
    }
    Ok(())
}

fn score_split(
    split: &Split,
    reps: &HashMap<String, RepresentationSet>,
    config: &RunConfig,
) -> anyhow::Result<(ScoreMatrix, Option<Vec<multipose::protocol::VerificationRecord>>)> {
    let fusion = config.fusion();
    let matrix = run_identification(split, reps, &fusion)
        .with_context(|| format!("split {}: identification", split.split_id))?;
    let pairs = if split.verification_pairs.is_empty() {
        warn!("split {}: no verification pairs", split.split_id);
        None
    } else {
        Some(
            run_verification(split, reps, &fusion)
                .with_context(|| format!("split {}: verification", split.split_id))?,
        )
    };
    Ok((matrix, pairs))
}

pub fn score(args: &ScoreArgs) -> anyhow::Result<()> {
    let (config, base) = RunConfig::load(&args.config)?;
    let pipelines = config.pipelines(&base, None)?;
    let records = read_manifest_file(&args.manifest)?;
    let split = resolve_split(&args.split, &build_templates(&records)?)?;
    let features: Vec<_> = pipelines.iter().map(load_features).collect::<anyhow::Result<_>>()?;
    let mut adapted = Vec::new();
    for (p, f) in pipelines.iter().zip(&features) {
        let model = read_pca(std::io::BufReader::new(
            std::fs::File::open(&p.model).with_context(|| format!("opening {}", p.model.display()))?,
        ))?;
        if model.pipeline_id() != p.id {
            return Err(DataError::wrap(anyhow!(
                "model {} belongs to pipeline {:?}, not {:?}",
                p.model.display(),
                model.pipeline_id(),
                p.id
            )));
        }
        adapted.push((p, PostProcess { model, alpha: p.section.alpha }, f));
    }
    let reps = representations(&split, &adapted)?;
    let (matrix, pairs) = score_split(&split, &reps, &config)?;
    write_scores(&args.out, &matrix, pairs.as_deref())
}

fn subject_map(records: &[MediaRecord]) -> anyhow::Result<HashMap<String, String>> {
    Ok(build_templates(records)?
        .into_iter()
        .map(|t| (t.template_id, t.subject_id))
        .collect())
}

fn write_report(dir: &Path, report: &MetricsReport) -> anyhow::Result<()> {
    write_text(&dir.join("report.csv"), &report.to_csv())?;
    write_text(&dir.join("report.txt"), &report.to_table())
}

pub fn metrics(args: &MetricsArgs) -> anyhow::Result<()> {
    let subjects = subject_map(&read_manifest_file(&args.manifest)?)?;
    let mut splits = Vec::new();
    for dir in &args.scores {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let scores = dir.join(SCORES_FILE);
        let rows = read_score_rows(std::fs::File::open(&scores).with_context(|| format!("opening {}", scores.display()))?)?;
        let matrix = ScoreMatrix::from_rows(&rows, &subjects).with_context(|| format!("reading {}", scores.display()))?;
        let vpath = dir.join(VERIFICATION_FILE);
        let pairs = if vpath.exists() {
            Some(read_verification_rows(std::fs::File::open(&vpath)?)?)
        } else {
            None
        };
        splits.push(split_metrics(&name, pairs.as_deref(), &matrix)?);
    }
    let report = MetricsReport::new(splits);
    write_report(&args.out, &report)?;
    print!("{}", report.to_table());
    Ok(())
}

/// Per split: fit PCA on the split's own features, adapt, score both
/// protocols and compute metrics. Writes every artifact under `out`.
pub fn evaluate(args: &EvaluateArgs) -> anyhow::Result<MetricsReport> {
    let (config, base) = RunConfig::load(&args.config)?;
    let mut pipelines = config.pipelines(&base, None)?;
    if !args.pipelines.is_empty() {
        for id in &args.pipelines {
            if !pipelines.iter().any(|p| &p.id == id) {
                return Err(DataError::wrap(anyhow!("config has no pipeline {id:?}")));
            }
        }
        pipelines.retain(|p| args.pipelines.contains(&p.id));
    }
    let records = read_manifest_file(&args.manifest)?;
    let templates = build_templates(&records)?;
    let features: Vec<_> = pipelines.iter().map(load_features).collect::<anyhow::Result<_>>()?;

    let mut used_dirs: BTreeMap<String, usize> = BTreeMap::new();
    let mut splits = Vec::new();
    for path in &args.splits {
        let split = resolve_split(path, &templates)?;
        let id = &split.split_id;
        let n = used_dirs.entry(id.clone()).or_default();
        *n += 1;
        let dir = if *n == 1 {
            args.out.join(format!("split_{id}"))
        } else {
            args.out.join(format!("split_{id}_{n}"))
        };

        let images: Vec<&str> = split.image_ids().collect();
        let mut adapted = Vec::new();
        for (p, f) in pipelines.iter().zip(&features) {
            let model = fit_for(p, f, &images)
                .with_context(|| format!("split {id}: fitting PCA for pipeline {}", p.id))?;
            save_model(&dir.join(format!("{}.mpca", p.id)), &model)?;
            adapted.push((p, PostProcess { model, alpha: p.section.alpha }, f));
        }
        let reps = representations(&split, &adapted).with_context(|| format!("split {id}: adaptation"))?;
        let (matrix, pairs) = score_split(&split, &reps, &config)?;
        write_scores(&dir, &matrix, pairs.as_deref())?;
        let m = split_metrics(id, pairs.as_deref(), &matrix).with_context(|| format!("split {id}: metrics"))?;
        info!("split {id}: RANK@1 = {:?}", m.get("RANK@1"));
        splits.push(m);
    }
    let report = MetricsReport::new(splits);
    write_report(&args.out, &report)?;
    print!("{}", report.to_table());
    Ok(report)
}

pub fn make_synthetic(args: &SyntheticArgs) -> anyhow::Result<()> {
    if args.subjects < 2 {
        return Err(anyhow::Error::new(UsageError("--subjects must be at least 2".into())));
    }
    let out = &args.out;
    let (records, config, split) = match args.kind {
        SyntheticKind::Faces => {
            if args.images < 2 {
                return Err(anyhow::Error::new(UsageError("--images must be at least 2".into())));
            }
            let cfg = FaceCorpusConfig {
                subjects: args.subjects,
                images_per_subject: args.images,
                gallery_images: 2.min(args.images - 1),
                seed: args.seed,
                ..Default::default()
            };
            let corpus = face_corpus(&cfg)?;
            corpus
                .records
                .par_iter()
                .zip(&corpus.images)
                .try_for_each(|(r, img)| write_png(&out.join(&r.filepath), img))?;
            (corpus.records, hdlbp_config("HLBP", &cfg.reference), corpus.split)
        }
        SyntheticKind::Poses => {
            let corpus = pose_corpus(&PoseCorpusConfig {
                subjects: args.subjects,
                seed: args.seed,
                ..Default::default()
            });
            let mut sources = Vec::new();
            for p in POSE_PIPELINES {
                let rel = PathBuf::from(format!("embeddings/{p}.mpfv"));
                save_features(&out.join(&rel), &corpus.features[p])?;
                sources.push((p, rel));
            }
            let refs: Vec<(&str, &Path)> = sources.iter().map(|(p, r)| (*p, r.as_path())).collect();
            (corpus.records, external_config(&refs), corpus.split)
        }
    };
    write_atomic(&out.join("manifest.csv"), |w: &mut dyn Write| {
        Ok(write_manifest(w, &records)?)
    })?;
    write_text(&out.join("split.txt"), &split.to_text())?;
    write_text(&out.join("config.toml"), &config.to_toml())?;
    info!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}
