//! End-to-end helpers: toy runs, evaluation and synthetic indexes.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbsr::dataset::{load_manifest, DatasetManifest, Split};
use sbsr::eval::{evaluate_all, judge_queries, EvalMode, MetricsReport};
use sbsr::retrieval::{extract_features, rank_models, FeatureIndex, IndexEntry, RankedList};
use sbsr::toy::{generate_toy, ToyConfig};
use sbsr::train::{train, EpochStats, SiameseModel, TrainConfig, TrainingSet};
use sbsr::{Domain, Result};

pub struct ToyRun {
    pub log: Vec<EpochStats>,
    pub index: FeatureIndex,
    pub cross: MetricsReport,
    pub view: MetricsReport,
    pub elapsed: Duration,
}

fn ids(
    manifest: &DatasetManifest,
    keep: impl Fn(&sbsr::dataset::ManifestEntry) -> bool,
) -> Vec<&str> {
    manifest
        .entries()
        .iter()
        .filter(|e| keep(e))
        .map(|e| e.id.as_str())
        .collect()
}

/// Cross-domain metrics for the test sketches and within-view metrics for
/// every view.
pub fn toy_metrics(
    index: &FeatureIndex,
    manifest: &DatasetManifest,
) -> Result<(MetricsReport, MetricsReport)> {
    let sketches = ids(manifest, |e| {
        e.split == Split::Test && e.domain == Domain::Sketch
    });
    let views = ids(manifest, |e| e.domain == Domain::View);
    let cross = evaluate_all(&judge_queries(index, sketches, EvalMode::Cross)?)?;
    let view = evaluate_all(&judge_queries(index, views, EvalMode::View)?)?;
    Ok((cross, view))
}

/// Generates the toy dataset under `dir`, trains from scratch, extracts and
/// evaluates.
pub fn run_toy(dir: &Path, toy: &ToyConfig, config: &TrainConfig) -> Result<ToyRun> {
    let start = Instant::now();
    let data = generate_toy(dir, toy)?;
    let manifest = load_manifest(&data.manifest_path)?;
    let set = TrainingSet::load(&manifest)?;
    let mut model = SiameseModel::new(config.seed, false);
    let log = train(&mut model, &set, &manifest, config, 0, |_, _| Ok(()))?;
    let index = extract_features(&model, &manifest)?;
    let (cross, view) = toy_metrics(&index, &manifest)?;
    Ok(ToyRun {
        log,
        index,
        cross,
        view,
        elapsed: start.elapsed(),
    })
}

/// `models` models with two random views each plus `sketches` sketches.
pub fn synthetic_index(models: usize, sketches: usize, seed: u64) -> FeatureIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feature = || -> Vec<f32> { (0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect() };
    let mut entries = Vec::with_capacity(2 * models + sketches);
    for m in 0..models {
        for v in 1..=2 {
            entries.push(IndexEntry {
                id: format!("m{m:05}_v{v}"),
                class_label: format!("c{}", m % 50),
                domain: Domain::View,
                model_id: Some(format!("m{m:05}")),
                feature: feature(),
            });
        }
    }
    for s in 0..sketches {
        entries.push(IndexEntry {
            id: format!("s{s:05}"),
            class_label: format!("c{}", s % 50),
            domain: Domain::Sketch,
            model_id: None,
            feature: feature(),
        });
    }
    FeatureIndex::new(entries, [7; 32]).expect("valid synthetic index")
}

/// Median and maximum wall time of ranking `queries` random features
/// against `index`.
pub fn query_latency(
    index: &FeatureIndex,
    queries: usize,
    seed: u64,
) -> (Duration, Duration, RankedList) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(queries);
    let mut last = None;
    for q in 0..queries {
        let f: Vec<f32> = (0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let t = Instant::now();
        let ranked = rank_models(&format!("q{q}"), &f, index);
        times.push(t.elapsed());
        last = Some(ranked);
    }
    times.sort();
    (
        times[times.len() / 2],
        *times.last().unwrap(),
        last.unwrap(),
    )
}
