//! Small trained-free artifacts for exercising the commands and the service.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sbsr::dataset::load_manifest;
use sbsr::retrieval::extract_features;
use sbsr::toy::{generate_toy, ToyConfig};
use sbsr::train::SiameseModel;

pub struct Fixture {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub checkpoint: PathBuf,
    pub index: PathBuf,
}

/// Toy dataset with one model per class, a shared-network checkpoint and
/// its index. With one network for both domains a gallery view queried as
/// a sketch lands on its own features.
pub fn fixture(dir: &Path) -> Fixture {
    let config = ToyConfig {
        models_per_class: 1,
        train_sketches_per_class: 2,
        test_sketches_per_class: 1,
        seed: 5,
    };
    let root = dir.join("toy");
    let toy = generate_toy(&root, &config).unwrap();
    let model = SiameseModel::new(3, true);
    let checkpoint = dir.join("model.ckpt");
    model.save(&checkpoint, 0).unwrap();
    let index = dir.join("index.sbfi");
    let manifest = load_manifest(&toy.manifest_path).unwrap();
    extract_features(&model, &manifest)
        .unwrap()
        .write(&index)
        .unwrap();
    Fixture {
        root,
        manifest: toy.manifest_path,
        checkpoint,
        index,
    }
}

pub fn sbsr() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sbsr"));
    cmd.env_remove("SBSR_DATA_DIR")
        .env_remove("SBSR_PORT")
        .env("RUST_LOG", "warn");
    cmd
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}
