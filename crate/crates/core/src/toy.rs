//! Procedural five-class dataset built from primitive meshes.
//!
//! Each class has one or more model variants; variants past the first get
//! random proportions and a turn about +Y.
//! Views are line renders from the dataset-wide viewpoint pair; sketches are
//! the line render of a random class variant from one of those viewpoints,
//! affine-jittered.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{apply_affine, write_manifest, AffineJitter, ManifestEntry, Split};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::mesh::primitives::{cone, cube, cylinder, icosphere, torus};
use crate::mesh::{
    discover_models, pick_viewpoints, render_lines, render_views, Mesh, ViewPairConfig, Viewpoint,
};
use crate::train::TrainConfig;

pub const TOY_CLASSES: [&str; 5] = ["cube", "icosphere", "cylinder", "cone", "torus"];
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const VIEWPOINTS_FILE: &str = "viewpoints.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub models_per_class: usize,
    pub train_sketches_per_class: usize,
    pub test_sketches_per_class: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            models_per_class: 1,
            train_sketches_per_class: 20,
            test_sketches_per_class: 20,
            seed: 7,
        }
    }
}

/// Training settings calibrated on the default toy dataset.
pub fn toy_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 10,
        learning_rate: 0.0003,
        batch_size: 16,
        kp: 2,
        kn: 4,
        seed: 7,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub root: PathBuf,
    pub manifest_path: PathBuf,
    pub views: ViewPairConfig,
    pub entries: Vec<ManifestEntry>,
}

/// Variant `k` of `class`, normalized. Variant 0 is the plain primitive.
pub fn toy_mesh<R: Rng + ?Sized>(class: &str, variant: usize, rng: &mut R) -> Result<Mesh> {
    let mut k = || {
        if variant == 0 {
            1.0
        } else {
            rng.random_range(0.7..1.3)
        }
    };
    let (base, scale) = match class {
        "cube" => (cube(), [k(), k(), k()]),
        "icosphere" => {
            let a = k();
            (icosphere(2), [a, k(), a])
        }
        "cylinder" => (cylinder(24), [1.0, k(), 1.0]),
        "cone" => (cone(24), [1.0, k(), 1.0]),
        "torus" => {
            let minor = 0.3 * k();
            (torus(1.0, minor, 24, 12), [1.0, 1.0, 1.0])
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown toy class {other:?}"
            )))
        }
    };
    let turn = if variant == 0 {
        0.0
    } else {
        rng.random_range(0.0..90.0)
    };
    Ok(base.scaled(scale).rotated_y(turn).normalized())
}

fn class_rng(seed: u64, class: usize, stream: u64) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

struct SketchJob {
    class: usize,
    index: usize,
    viewpoint: Viewpoint,
    jitter: AffineJitter,
    variant: usize,
}

/// Writes models, views, sketches, `viewpoints.json` and `manifest.jsonl`
/// under `out_dir`. Output depends only on `config`.
pub fn generate_toy(out_dir: &Path, config: &ToyConfig) -> Result<ToyDataset> {
    if config.models_per_class == 0 {
        return Err(Error::InvalidArgument(
            "toy dataset needs at least one model per class".into(),
        ));
    }
    let model_dir = out_dir.join("models");
    let mut meshes: Vec<Vec<Mesh>> = Vec::new();
    for (c, class) in TOY_CLASSES.iter().enumerate() {
        let dir = model_dir.join(class);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut rng = class_rng(config.seed, c, 0);
        let mut variants = Vec::new();
        for v in 0..config.models_per_class {
            let mesh = toy_mesh(class, v, &mut rng)?;
            let path = dir.join(format!("{class}_{v}.obj"));
            std::fs::write(&path, mesh.to_obj()).map_err(|e| Error::io(&path, e))?;
            variants.push(mesh);
        }
        meshes.push(variants);
    }

    let views = pick_viewpoints(config.seed)?;
    let vp_path = out_dir.join(VIEWPOINTS_FILE);
    let vp_json = serde_json::to_string_pretty(&views)
        .map_err(|e| Error::format("viewpoints", e.to_string()))?;
    std::fs::write(&vp_path, vp_json).map_err(|e| Error::io(&vp_path, e))?;
    let models = discover_models(&model_dir)?;
    let (mut view_entries, failures) = render_views(&models, &out_dir.join("views"), &views)?;
    if let Some((id, err)) = failures.into_iter().next() {
        return Err(Error::InvalidArgument(format!(
            "toy model {id} failed to render: {err}"
        )));
    }
    for e in &mut view_entries {
        e.image_path = format!("views/{}", e.image_path);
    }

    let per_class = config.train_sketches_per_class + config.test_sketches_per_class;
    let mut jobs = Vec::new();
    for c in 0..TOY_CLASSES.len() {
        let mut rng = class_rng(config.seed, c, 1);
        for index in 0..per_class {
            let viewpoint = if rng.random_bool(0.5) {
                views.v1
            } else {
                views.v2
            };
            jobs.push(SketchJob {
                class: c,
                index,
                viewpoint,
                variant: rng.random_range(0..config.models_per_class),
                jitter: AffineJitter::sample(&mut rng),
            });
        }
    }
    let sketch_dir = out_dir.join("sketches");
    std::fs::create_dir_all(&sketch_dir).map_err(|e| Error::io(&sketch_dir, e))?;
    let sketch_entries: Vec<ManifestEntry> = jobs
        .par_iter()
        .map(|job| {
            let class = TOY_CLASSES[job.class];
            let img = apply_affine(
                &render_lines(&meshes[job.class][job.variant], &job.viewpoint),
                job.jitter,
            );
            let id = format!("{class}_s{:02}", job.index);
            let file = format!("sketches/{id}.pgm");
            img.save(&out_dir.join(&file))?;
            Ok(ManifestEntry {
                id,
                class_label: class.to_owned(),
                domain: Domain::Sketch,
                image_path: file,
                model_id: None,
                split: if job.index < config.train_sketches_per_class {
                    Split::Train
                } else {
                    Split::Test
                },
            })
        })
        .collect::<Result<_>>()?;

    let mut entries = view_entries;
    entries.extend(sketch_entries);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_manifest(&manifest_path, &entries)?;
    Ok(ToyDataset {
        root: out_dir.to_path_buf(),
        manifest_path,
        views,
        entries,
    })
}
