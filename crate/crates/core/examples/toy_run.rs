//! Generates the toy dataset, trains, and prints retrieval metrics.
//!
//! Knobs come from environment variables, e.g.
//! `EPOCHS=12 KN=8 cargo run --release --example toy_run`. Unset knobs use
//! the calibrated toy defaults.

use std::time::Instant;

use sbsr::dataset::{load_manifest, Split};
use sbsr::eval::{evaluate_all, judge_queries, EvalMode};
use sbsr::retrieval::extract_features;
use sbsr::toy::{generate_toy, toy_train_config, ToyConfig};
use sbsr::train::{train, SiameseModel, TrainConfig, TrainingSet};
use sbsr::Domain;

fn env<T: std::str::FromStr>(name: &str, default: T) -> T {
    std::env::var(name)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn main() -> sbsr::Result<()> {
    let d = ToyConfig::default();
    let toy = ToyConfig {
        models_per_class: env("MODELS", d.models_per_class),
        train_sketches_per_class: env("TRAIN", d.train_sketches_per_class),
        test_sketches_per_class: env("TEST", d.test_sketches_per_class),
        seed: env("SEED", d.seed),
    };
    let c = toy_train_config();
    let config = TrainConfig {
        epochs: env("EPOCHS", c.epochs),
        learning_rate: env("LR", c.learning_rate),
        batch_size: env("BATCH", c.batch_size),
        kp: env("KP", c.kp),
        kn: env("KN", c.kn),
        seed: env("SEED", c.seed),
        ..c
    };
    let dir = tempfile::tempdir().map_err(|e| sbsr::Error::InvalidArgument(e.to_string()))?;
    let start = Instant::now();
    let data = generate_toy(dir.path(), &toy)?;
    let manifest = load_manifest(&data.manifest_path)?;
    let set = TrainingSet::load(&manifest)?;
    eprintln!("generated in {:.1}s", start.elapsed().as_secs_f64());
    let mut model = SiameseModel::new(config.seed, false);
    let report = |model: &SiameseModel| -> sbsr::Result<()> {
        let index = extract_features(model, &manifest)?;
        let test: Vec<&str> = manifest
            .entries()
            .iter()
            .filter(|e| e.split == Split::Test && e.domain == Domain::Sketch)
            .map(|e| e.id.as_str())
            .collect();
        let views: Vec<&str> = manifest
            .entries()
            .iter()
            .filter(|e| e.domain == Domain::View)
            .map(|e| e.id.as_str())
            .collect();
        let cross = evaluate_all(&judge_queries(
            &index,
            test.iter().copied(),
            EvalMode::Cross,
        )?)?;
        let view = evaluate_all(&judge_queries(
            &index,
            views.iter().copied(),
            EvalMode::View,
        )?)?;
        eprintln!(
            "  cross NN {:.3} mAP {:.3} | view NN {:.3} mAP {:.3}",
            cross.nn, cross.map, view.nn, view.map
        );
        Ok(())
    };
    train(&mut model, &set, &manifest, &config, 0, |m, s| {
        eprintln!(
            "epoch {} loss {:.4} pairs {} t={:.0}s",
            s.epoch,
            s.mean_loss,
            s.pairs,
            start.elapsed().as_secs_f64()
        );
        report(m)
    })?;
    eprintln!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
