use std::collections::{BTreeMap, HashMap};
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multipose::adaptation::{fit_pca_with, PcaSolver, PostProcess};
use multipose::features::{extract_hdlbp, ExtractorConfig, FeatureVector};
use multipose::geometry::{align, builtin_reference, estimate_similarity_transform, LandmarkSchema, LandmarkSet};
use multipose::matching::{softmax_fuse, FusionConfig, RepresentationSet};
use multipose::protocol::{build_templates, run_identification, Split};
use multipose::synthetic::{face_corpus, pose_corpus, FaceCorpusConfig, PoseCorpusConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geometry(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut points = || {
        LandmarkSet::new(
            LandmarkSchema::FivePoint,
            (0..5).map(|_| [rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)]).collect(),
        )
        .unwrap()
    };
    let (src, dst) = (points(), points());
    c.bench_function("similarity_estimate", |b| {
        b.iter(|| estimate_similarity_transform(black_box(&src), black_box(&dst)).unwrap())
    });

    let corpus = face_corpus(&FaceCorpusConfig { subjects: 2, images_per_subject: 3, ..Default::default() }).unwrap();
    let reference = builtin_reference("avg-all-face-lmd").unwrap();
    let (img, lm) = (&corpus.images[0], corpus.records[0].landmarks.as_ref().unwrap());
    c.bench_function("align_face", |b| b.iter(|| align(black_box(img), lm, &reference, None).unwrap()));

    let (crop, _) = align(img, lm, &reference, None).unwrap();
    let config = ExtractorConfig::default();
    c.bench_function("hdlbp_extract", |b| b.iter(|| extract_hdlbp(black_box(&crop), &config, "HLBP").unwrap()));
}

fn adaptation(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("pca_fit");
    group.sample_size(10);
    for (n, d) in [(200, 64), (100, 4096)] {
        let data: Vec<FeatureVector> = (0..n)
            .map(|_| FeatureVector::new("P", (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{n}x{d}")), &data, |b, data| {
            b.iter(|| fit_pca_with(data, 0.95, PcaSolver::Auto).unwrap())
        });
    }
    group.finish();
}

fn matching(c: &mut Criterion) {
    let scores: Vec<f64> = (0..64).map(|k| (k as f64 * 0.37).sin()).collect();
    let fusion = FusionConfig::default();
    c.bench_function("softmax_fuse_64", |b| b.iter(|| softmax_fuse(black_box(&scores), &fusion).unwrap()));

    let corpus = pose_corpus(&PoseCorpusConfig { subjects: 100, ..Default::default() });
    let mut per_image: BTreeMap<String, Vec<FeatureVector>> = BTreeMap::new();
    for feats in corpus.features.values() {
        let all: Vec<FeatureVector> = feats.values().cloned().collect();
        let post = PostProcess { model: fit_pca_with(&all, 0.95, PcaSolver::Auto).unwrap(), alpha: 0.5 };
        for (id, f) in feats {
            per_image.entry(id.clone()).or_default().push(post.apply(f).unwrap());
        }
    }
    let reps: HashMap<String, RepresentationSet> = per_image
        .into_iter()
        .map(|(id, fs)| (id.clone(), RepresentationSet::new(id, fs).unwrap()))
        .collect();
    let split = Split::resolve(&corpus.split, &build_templates(&corpus.records).unwrap()).unwrap();
    let mut group = c.benchmark_group("score_matrix");
    group.sample_size(10);
    group.bench_function("100x100_two_pipelines", |b| {
        b.iter(|| run_identification(&split, &reps, &fusion).unwrap())
    });
    group.finish();
}

criterion_group!(benches, geometry, adaptation, matching);
criterion_main!(benches);
