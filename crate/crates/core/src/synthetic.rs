//! Procedurally generated corpora for tests, benchmarks and the CLI.
//!
//! Two generators:
//! * [`face_corpus`] renders textured face images with planted landmarks.
//!   Each subject owns a random blob texture defined in crop coordinates;
//!   every image views it through a random similarity transform, so
//!   alignment against the reference model recovers the canonical face.
//! * [`pose_corpus`] produces ready-made embeddings for two pose-specific
//!   pipelines. Each image belongs to one pose condition, and only the
//!   pipeline matching that condition sees the subject clearly.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::features::FeatureVector;
use crate::geometry::{builtin_reference, GeometryError, LandmarkSet, SimilarityTransform};
use crate::image::Image;
use crate::protocol::{MediaRecord, SplitSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FaceCorpusConfig {
    pub subjects: usize,
    pub images_per_subject: usize,
    /// The first this-many images of each subject form its gallery
    /// template; the rest form its probe template.
    pub gallery_images: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Standard deviation of the planted landmark noise, in pixels.
    pub landmark_jitter: f64,
    /// Half-width of uniform pixel noise, in intensity levels.
    pub pixel_noise: f64,
    pub reference: String,
    pub seed: u64,
}

impl Default for FaceCorpusConfig {
    fn default() -> Self {
        FaceCorpusConfig {
            subjects: 20,
            images_per_subject: 5,
            gallery_images: 2,
            image_width: 240,
            image_height: 272,
            landmark_jitter: 0.25,
            pixel_noise: 1.5,
            reference: "avg-all-face-lmd".into(),
            seed: 7,
        }
    }
}

/// Records with their rendered images (same order) and a closed-set split
/// with every probe x gallery verification pair.
#[derive(Debug, Clone)]
pub struct FaceCorpus {
    pub records: Vec<MediaRecord>,
    pub images: Vec<Image>,
    pub split: SplitSpec,
}

struct Blob {
    x: f64,
    y: f64,
    inv_two_sigma2: f64,
    amplitude: f64,
}

struct Texture {
    blobs: Vec<Blob>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Texture {
        let blobs = (0..14)
            .map(|_| {
                let sigma: f64 = rng.random_range(4.0..12.0);
                Blob {
                    x: rng.random_range(-10.0..138.0),
                    y: rng.random_range(-10.0..170.0),
                    inv_two_sigma2: 1.0 / (2.0 * sigma * sigma),
                    amplitude: rng.random_range(40.0..90.0) * if rng.random::<bool>() { 1.0 } else { -1.0 },
                }
            })
            .collect();
        Texture { blobs }
    }

    /// Intensity at crop coordinates `(u, v)`, roughly within [0, 255].
    fn at(&self, u: f64, v: f64) -> f64 {
        let mut s = 128.0;
        for b in &self.blobs {
            let d2 = (u - b.x).powi(2) + (v - b.y).powi(2);
            if d2 * b.inv_two_sigma2 < 12.0 {
                s += b.amplitude * (-d2 * b.inv_two_sigma2).exp();
            }
        }
        s
    }
}

fn subject_id(s: usize) -> String {
    format!("S{s:03}")
}

fn closed_split(subjects: usize) -> SplitSpec {
    let gallery: Vec<String> = (0..subjects).map(|s| format!("{}-G", subject_id(s))).collect();
    let probes: Vec<String> = (0..subjects).map(|s| format!("{}-P", subject_id(s))).collect();
    let pairs = probes
        .iter()
        .flat_map(|p| gallery.iter().map(move |g| (p.clone(), g.clone())))
        .collect();
    SplitSpec {
        split_id: "1".into(),
        closed_set: true,
        gallery,
        probes,
        pairs,
    }
}

fn template_for(s: usize, k: usize, gallery_images: usize) -> String {
    let side = if k < gallery_images { "G" } else { "P" };
    format!("{}-{side}", subject_id(s))
}

/// Renders the corpus. Deterministic in `config`.
pub fn face_corpus(config: &FaceCorpusConfig) -> Result<FaceCorpus, GeometryError> {
    if config.gallery_images == 0 || config.gallery_images >= config.images_per_subject {
        return Err(GeometryError::Reference(
            "gallery_images must leave at least one probe image".into(),
        ));
    }
    let reference = builtin_reference(&config.reference)
        .ok_or_else(|| GeometryError::Reference(format!("unknown reference {:?}", config.reference)))?;
    let (cw, ch) = (reference.crop_width() as f64, reference.crop_height() as f64);
    let (w, h) = (config.image_width, config.image_height);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = Normal::new(0.0, config.landmark_jitter.max(0.0))
        .map_err(|_| GeometryError::Reference("invalid landmark jitter".into()))?;

    let mut records = Vec::new();
    let mut images = Vec::new();
    for s in 0..config.subjects {
        let texture = Texture::random(&mut rng);
        for k in 0..config.images_per_subject {
            // Crop frame to image frame: the crop centre lands near the
            // image centre, scaled and rolled.
            let scale = rng.random_range(0.85..1.15);
            let theta = rng.random_range(-15f64..15.0).to_radians();
            let centre = [
                w as f64 / 2.0 + rng.random_range(-8.0..8.0),
                h as f64 / 2.0 + rng.random_range(-8.0..8.0),
            ];
            let to_image = SimilarityTransform::translation(centre[0], centre[1])
                .compose(&SimilarityTransform::new(scale, theta, 0.0, 0.0)?)
                .compose(&SimilarityTransform::translation(-cw / 2.0, -ch / 2.0));
            let to_crop = to_image.inverse();

            let gain = rng.random_range(0.8..1.1);
            let offset = rng.random_range(-15.0..15.0);
            let image = Image::from_fn(w, h, |x, y| {
                let [u, v] = to_crop.apply([x as f64, y as f64]);
                let noise = if config.pixel_noise > 0.0 {
                    rng.random_range(-config.pixel_noise..config.pixel_noise)
                } else {
                    0.0
                };
                (gain * texture.at(u, v) + offset + noise).round().clamp(0.0, 255.0) as f32
            });

            let planted = LandmarkSet::new(
                reference.landmarks().schema().clone(),
                reference
                    .landmarks()
                    .points()
                    .iter()
                    .map(|&p| {
                        let [x, y] = to_image.apply(p);
                        [x + jitter.sample(&mut rng), y + jitter.sample(&mut rng)]
                    })
                    .collect(),
            )?;
            let corners = [[0.0, 0.0], [cw, 0.0], [0.0, ch], [cw, ch]].map(|p| to_image.apply(p));
            let (x0, x1) = min_max(corners.iter().map(|p| p[0]));
            let (y0, y1) = min_max(corners.iter().map(|p| p[1]));

            let image_id = format!("{}-{k}", subject_id(s));
            records.push(MediaRecord {
                filepath: format!("images/{image_id}.png").into(),
                image_id,
                template_id: template_for(s, k, config.gallery_images),
                subject_id: subject_id(s),
                bbox: Some([x0.round(), y0.round(), (x1 - x0).round(), (y1 - y0).round()]),
                pose_bucket: Some("frontal".into()),
                landmarks: Some(planted),
            });
            images.push(image);
        }
    }
    Ok(FaceCorpus {
        records,
        images,
        split: closed_split(config.subjects),
    })
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Pipeline ids produced by [`pose_corpus`], one per pose condition.
pub const POSE_PIPELINES: [&str; 2] = ["frontal", "profile"];

#[derive(Debug, Clone, PartialEq)]
pub struct PoseCorpusConfig {
    pub subjects: usize,
    /// Gallery images per pose condition; galleries hold both poses.
    pub gallery_per_pose: usize,
    /// Probe images per subject, all in one pose condition.
    pub probe_images: usize,
    pub dim: usize,
    /// Per-coordinate noise when the pipeline matches the image's pose.
    pub informative_noise: f64,
    /// Subject-signal weight when the pipeline does not match the pose.
    pub weak_signal: f64,
    /// Per-coordinate noise when the pipeline does not match the pose.
    pub weak_noise: f64,
    pub seed: u64,
}

impl Default for PoseCorpusConfig {
    fn default() -> Self {
        PoseCorpusConfig {
            subjects: 30,
            gallery_per_pose: 2,
            probe_images: 3,
            dim: 64,
            informative_noise: 0.3,
            weak_signal: 0.1,
            weak_noise: 1.0,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoseCorpus {
    pub records: Vec<MediaRecord>,
    /// Pipeline id to image id to embedding.
    pub features: BTreeMap<String, BTreeMap<String, FeatureVector>>,
    pub split: SplitSpec,
}

/// Generates pose-conditioned embeddings. Subject `s` probes in pose
/// `s % 2`, so each single pipeline sees only half the probes clearly.
pub fn pose_corpus(config: &PoseCorpusConfig) -> PoseCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::new();
    let mut features: BTreeMap<String, BTreeMap<String, FeatureVector>> = POSE_PIPELINES
        .iter()
        .map(|p| (p.to_string(), BTreeMap::new()))
        .collect();

    for s in 0..config.subjects {
        let identity: Vec<Vec<f64>> = POSE_PIPELINES
            .iter()
            .map(|_| (0..config.dim).map(|_| std.sample(&mut rng)).collect())
            .collect();
        let gallery = (0..2 * config.gallery_per_pose).map(|k| (k, k % 2, true));
        let probes = (0..config.probe_images).map(|k| (2 * config.gallery_per_pose + k, s % 2, false));
        for (k, pose, in_gallery) in gallery.chain(probes) {
            let image_id = format!("{}-{k}", subject_id(s));
            for (p, pipeline) in POSE_PIPELINES.iter().enumerate() {
                let (signal, noise) = if p == pose {
                    (1.0, config.informative_noise)
                } else {
                    (config.weak_signal, config.weak_noise)
                };
                let values = identity[p]
                    .iter()
                    .map(|u| signal * u + noise * std.sample(&mut rng))
                    .collect();
                let fv = FeatureVector::new(*pipeline, values).expect("finite embedding");
                features.get_mut(*pipeline).expect("pipeline").insert(image_id.clone(), fv);
            }
            let side = if in_gallery { "G" } else { "P" };
            records.push(MediaRecord {
                filepath: format!("embeddings/{image_id}").into(),
                template_id: format!("{}-{side}", subject_id(s)),
                subject_id: subject_id(s),
                image_id,
                bbox: None,
                pose_bucket: Some(POSE_PIPELINES[pose].to_string()),
                landmarks: None,
            });
        }
    }
    PoseCorpus {
        records,
        features,
        split: closed_split(config.subjects),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::align;
    use crate::protocol::{build_templates, Split};

    fn small() -> FaceCorpusConfig {
        FaceCorpusConfig {
            subjects: 3,
            images_per_subject: 3,
            gallery_images: 1,
            ..Default::default()
        }
    }

    #[test]
    fn face_corpus_is_deterministic_and_well_formed() {
        let a = face_corpus(&small()).unwrap();
        let b = face_corpus(&small()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.images, b.images);
        assert_eq!(a.records.len(), 9);
        let templates = build_templates(&a.records).unwrap();
        let split = Split::resolve(&a.split, &templates).unwrap();
        assert_eq!(split.gallery.len(), 3);
        assert_eq!(split.probes[0].members.len(), 2);
        assert_eq!(split.verification_pairs.len(), 9);
    }

    #[test]
    fn alignment_recovers_the_canonical_face() {
        let cfg = FaceCorpusConfig {
            landmark_jitter: 0.0,
            pixel_noise: 0.0,
            ..small()
        };
        let corpus = face_corpus(&cfg).unwrap();
        let reference = builtin_reference(&cfg.reference).unwrap();
        // Two images of one subject align to nearly the same crop, and to
        // clearly different crops from another subject.
        let crop = |i: usize| {
            let r = &corpus.records[i];
            align(&corpus.images[i], r.landmarks.as_ref().unwrap(), &reference, None).unwrap().0
        };
        let centred = |img: &Image| {
            let px: Vec<f64> = img.pixels()[..].iter().map(|&v| v as f64).collect();
            let m = px.iter().sum::<f64>() / px.len() as f64;
            px.into_iter().map(|v| v - m).collect::<Vec<_>>()
        };
        let corr = |a: &Image, b: &Image| {
            let (a, b) = (centred(a), centred(b));
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            dot / (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt()
        };
        let (a0, a1, b0) = (crop(0), crop(1), crop(3));
        assert!(corr(&a0, &a1) > 0.9, "{}", corr(&a0, &a1));
        assert!(corr(&a0, &b0) < 0.6, "{}", corr(&a0, &b0));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cfg = FaceCorpusConfig {
            gallery_images: 3,
            ..small()
        };
        assert!(face_corpus(&cfg).is_err());
        let cfg = FaceCorpusConfig {
            reference: "nope".into(),
            ..small()
        };
        assert!(face_corpus(&cfg).is_err());
    }

    #[test]
    fn pose_corpus_layout() {
        let c = pose_corpus(&PoseCorpusConfig::default());
        assert_eq!(c.records.len(), 30 * 7);
        for pipeline in POSE_PIPELINES {
            assert_eq!(c.features[pipeline].len(), c.records.len());
        }
        let templates = build_templates(&c.records).unwrap();
        for t in &templates {
            let poses: std::collections::BTreeSet<_> = t
                .members
                .iter()
                .map(|id| c.records.iter().find(|r| &r.image_id == id).unwrap().pose_bucket.clone())
                .collect();
            let expected = if t.template_id.ends_with("-G") { 2 } else { 1 };
            assert_eq!(poses.len(), expected, "{}", t.template_id);
        }
        Split::resolve(&c.split, &templates).unwrap();
    }
}
