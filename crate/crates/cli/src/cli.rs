//! Argument definitions and the subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use sbsr::dataset::{load_image, load_manifest, materialize_augmentations, write_manifest, Split};
use sbsr::eval::{evaluate_all, judge_queries, EvalMode};
use sbsr::loss::CombinedTerms;
use sbsr::mesh::{discover_models, pick_viewpoints, render_views};
use sbsr::retrieval::{extract_features, FeatureIndex};
use sbsr::toy::{generate_toy, ToyConfig, MANIFEST_FILE, VIEWPOINTS_FILE};
use sbsr::train::{
    train_epoch, DatasetProfile, SiameseModel, TrainConfig, TrainingSet, DEFAULT_BATCH_SIZE,
    DEFAULT_LEARNING_RATE,
};

use crate::error::{CliError, CliResult, Exit};
use crate::query::{query_models, QueryResponse};
use crate::server;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const INDEX_FILE: &str = "index.sbfi";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(name = "sbsr", version, about = "Sketch-based 3D shape retrieval")]
pub struct Cli {
    /// Directory supplying default artifact paths (manifest.jsonl,
    /// model.ckpt, index.sbfi).
    #[arg(long, global = true, env = "SBSR_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render two line-drawing views of every OBJ model.
    Render(RenderArgs),
    /// Add two affine-jittered copies of every training sketch.
    Augment(AugmentArgs),
    /// Train the sketch and view networks.
    Train(TrainArgs),
    /// Embed every manifest entry into a feature index.
    Extract(ExtractArgs),
    /// Rank the indexed models against a query sketch.
    Retrieve(RetrieveArgs),
    /// Score retrieval over the queries of a manifest.
    Eval(EvalArgs),
    /// Serve query-by-sketch over HTTP.
    Serve(ServeArgs),
    /// Generate the procedural five-class dataset.
    Toy(ToyArgs),
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Directory searched recursively for .obj files; a file's parent
    /// directory names its class.
    pub obj_dir: PathBuf,
    /// Receives the view images, manifest.jsonl and viewpoints.json.
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Manifest updated in place.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Written after every epoch; read first with --resume.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Total epochs; defaults to the profile's budget.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_enum, default_value_t = Profile::Psb)]
    pub profile: Profile,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    #[arg(long, default_value_t = sbsr::dataset::DEFAULT_KP)]
    pub kp: usize,
    #[arg(long, default_value_t = sbsr::dataset::DEFAULT_KN)]
    pub kn: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// One network shared by sketches and views.
    #[arg(long)]
    pub identical: bool,
    /// Adds the second sketch-view term to every record.
    #[arg(long)]
    pub symmetric_cross: bool,
    /// Continue from the epoch stored in --checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Also append the epoch log to this file.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Profile {
    Psb,
    Shrec13,
}

impl From<Profile> for DatasetProfile {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Psb => DatasetProfile::Psb,
            Profile::Shrec13 => DatasetProfile::Shrec13,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output index file.
    #[arg(long)]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Include elapsed_ms in the response.
    #[arg(long)]
    pub timing: bool,
    /// PGM or PNG sketch.
    pub query: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Queries are this manifest's entries; without it, every indexed entry
    /// of the query domain.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Cross,
    Sketch,
    View,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Cross => EvalMode::Cross,
            Mode::Sketch => EvalMode::Sketch,
            Mode::View => EvalMode::View,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Locates the view images served under /api/models.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, env = "SBSR_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = ToyConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = ToyConfig::default().models_per_class)]
    pub models: usize,
    #[arg(long, default_value_t = ToyConfig::default().train_sketches_per_class)]
    pub train: usize,
    #[arg(long, default_value_t = ToyConfig::default().test_sketches_per_class)]
    pub test: usize,
}

/// `explicit`, else `name` inside the data directory.
fn artifact(
    explicit: &Option<PathBuf>,
    data_dir: &Option<PathBuf>,
    name: &str,
    flag: &str,
) -> CliResult<PathBuf> {
    explicit
        .clone()
        .or_else(|| data_dir.as_ref().map(|d| d.join(name)))
        .ok_or_else(|| {
            CliError::new(
                Exit::InputMissing,
                format!("{flag} is required when SBSR_DATA_DIR is not set"),
            )
        })
}

pub fn run(cli: Cli) -> CliResult {
    let d = &cli.data_dir;
    match cli.command {
        Command::Render(a) => render(&a),
        Command::Augment(a) => augment(
            &artifact(&a.manifest, d, MANIFEST_FILE, "--manifest")?,
            a.seed,
        ),
        Command::Train(a) => train(&a, d),
        Command::Extract(a) => extract(
            &artifact(&a.checkpoint, d, CHECKPOINT_FILE, "--checkpoint")?,
            &artifact(&a.manifest, d, MANIFEST_FILE, "--manifest")?,
            &artifact(&a.index, d, INDEX_FILE, "--index")?,
        ),
        Command::Retrieve(a) => retrieve(&a, d),
        Command::Eval(a) => eval(&a, d),
        Command::Serve(a) => {
            let state = server::AppState::load(
                &artifact(&a.checkpoint, d, CHECKPOINT_FILE, "--checkpoint")?,
                &artifact(&a.index, d, INDEX_FILE, "--index")?,
                a.manifest
                    .clone()
                    .or_else(|| d.as_ref().map(|d| d.join(MANIFEST_FILE)))
                    .as_deref(),
            )?;
            server::serve_blocking(state, &a.host, a.port)
        }
        Command::Toy(a) => toy(&a),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::new(Exit::Failure, format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::new(Exit::Failure, format!("{}: {e}", path.display())))
}

pub fn render(a: &RenderArgs) -> CliResult {
    if !a.obj_dir.is_dir() {
        return Err(CliError::new(
            Exit::InputMissing,
            format!("{} is not a directory", a.obj_dir.display()),
        ));
    }
    let models = discover_models(&a.obj_dir)?;
    if models.is_empty() {
        return Err(CliError::new(
            Exit::InputMissing,
            format!("no .obj files under {}", a.obj_dir.display()),
        ));
    }
    let views = pick_viewpoints(a.seed)?;
    let (entries, failures) = render_views(&models, &a.out_dir, &views)?;
    if entries.is_empty() {
        return Err(CliError::new(
            Exit::InputMissing,
            format!("all {} models failed to render", failures.len()),
        ));
    }
    write_manifest(&a.out_dir.join(MANIFEST_FILE), &entries)?;
    let vp = serde_json::to_string_pretty(&views).expect("viewpoints serialize");
    write_file(&a.out_dir.join(VIEWPOINTS_FILE), vp.as_bytes())?;
    info!(
        "rendered {} models ({} failed) into {}",
        entries.len() / 2,
        failures.len(),
        a.out_dir.display()
    );
    Ok(())
}

pub fn augment(manifest_path: &Path, seed: u64) -> CliResult {
    let manifest = load_manifest(manifest_path)?;
    if let Some(e) = manifest.entries().iter().find(|e| e.id.ends_with("_aug1")) {
        return Err(CliError::new(
            Exit::Failure,
            format!("manifest is already augmented (found {:?})", e.id),
        ));
    }
    let added = materialize_augmentations(&manifest, seed)?;
    let mut entries = manifest.entries().to_vec();
    info!("added {} augmented sketches", added.len());
    entries.extend(added);
    write_manifest(manifest_path, &entries)?;
    Ok(())
}

pub fn train(a: &TrainArgs, data_dir: &Option<PathBuf>) -> CliResult {
    let manifest_path = artifact(&a.manifest, data_dir, MANIFEST_FILE, "--manifest")?;
    let checkpoint = artifact(&a.checkpoint, data_dir, CHECKPOINT_FILE, "--checkpoint")?;
    let config = TrainConfig {
        epochs: a
            .epochs
            .unwrap_or(DatasetProfile::from(a.profile).default_epochs()),
        learning_rate: a.lr,
        batch_size: a.batch,
        kp: a.kp,
        kn: a.kn,
        seed: a.seed,
        terms: CombinedTerms {
            symmetric_cross: a.symmetric_cross,
        },
    };
    config
        .validate()
        .map_err(|e| CliError::new(Exit::Failure, e.to_string()))?;
    let manifest = load_manifest(&manifest_path)?;
    let (mut model, start) = if a.resume {
        let (model, epoch) = SiameseModel::load(&checkpoint)?;
        if model.is_identical() != a.identical {
            warn!("--identical ignored on resume; the checkpoint decides");
        }
        (model, epoch)
    } else {
        let model = SiameseModel::new(a.seed, a.identical);
        model.save(&checkpoint, 0)?;
        (model, 0)
    };
    if start >= config.epochs {
        info!("checkpoint is at epoch {start}; nothing to train");
        return Ok(());
    }
    let set = TrainingSet::load(&manifest)?;
    let mut log_file = match &a.log {
        Some(p) => Some(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| CliError::new(Exit::Failure, format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let stdout = std::io::stdout();
    for epoch in start..config.epochs {
        let stats = match train_epoch(&mut model, &set, &manifest, &config, epoch) {
            Ok(s) => s,
            Err(sbsr::Error::NonFiniteLoss { pair_index, loss }) => {
                return Err(CliError::new(
                    Exit::Diverged,
                    format!(
                        "training diverged in epoch {}: loss {loss} at pair {pair_index}",
                        epoch + 1
                    ),
                ))
            }
            Err(e) => return Err(e.into()),
        };
        model.save(&checkpoint, stats.epoch)?;
        let line = serde_json::to_string(&stats).expect("epoch stats serialize");
        writeln!(stdout.lock(), "{line}")
            .map_err(|e| CliError::new(Exit::Failure, e.to_string()))?;
        if let Some(f) = log_file.as_mut() {
            writeln!(f, "{line}").map_err(|e| CliError::new(Exit::Failure, e.to_string()))?;
        }
    }
    Ok(())
}

pub fn extract(checkpoint: &Path, manifest: &Path, out: &Path) -> CliResult {
    let (model, _) = SiameseModel::load(checkpoint)?;
    let manifest = load_manifest(manifest)?;
    let index = extract_features(&model, &manifest)?;
    write_file(out, &index.encode()?)?;
    info!("indexed {} of {} entries", index.len(), manifest.len());
    Ok(())
}

pub fn retrieve(a: &RetrieveArgs, data_dir: &Option<PathBuf>) -> CliResult {
    let index = FeatureIndex::read(&artifact(&a.index, data_dir, INDEX_FILE, "--index")?)?;
    let (model, _) = SiameseModel::load(&artifact(
        &a.checkpoint,
        data_dir,
        CHECKPOINT_FILE,
        "--checkpoint",
    )?)?;
    index
        .check_model(&model)
        .map_err(|e| CliError::new(Exit::InputMissing, e.to_string()))?;
    let start = Instant::now();
    let image = load_image(&a.query)?;
    let k = usize::try_from(a.k).unwrap_or(usize::MAX);
    let results = query_models(&model, &index, &image, k)?;
    let response = QueryResponse {
        results,
        elapsed_ms: a.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&response).expect("response serializes")
    );
    Ok(())
}

pub fn eval(a: &EvalArgs, data_dir: &Option<PathBuf>) -> CliResult {
    let index = FeatureIndex::read(&artifact(&a.index, data_dir, INDEX_FILE, "--index")?)?;
    let mode = EvalMode::from(a.mode);
    let split_ok = |s: Split| match a.split {
        SplitArg::All => true,
        SplitArg::Train => s == Split::Train,
        SplitArg::Test => s == Split::Test,
    };
    let queries: Vec<String> = match &a.manifest {
        Some(p) => {
            let manifest = load_manifest(p)?;
            manifest
                .entries()
                .iter()
                .filter(|e| split_ok(e.split))
                .filter(|e| {
                    let present = index.get(&e.id).is_some();
                    if !present {
                        warn!("query {:?} is not in the index; skipped", e.id);
                    }
                    present
                })
                .map(|e| e.id.clone())
                .collect()
        }
        None => {
            if a.split != SplitArg::All {
                warn!("--split needs --manifest; using every indexed query");
            }
            index.entries().iter().map(|e| e.id.clone()).collect()
        }
    };
    let lists = judge_queries(&index, queries.iter().map(String::as_str), mode)?;
    let report =
        evaluate_all(&lists).map_err(|e| CliError::new(Exit::Unevaluable, e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &a.out {
        write_file(out, json.as_bytes())?;
    }
    eprint!("{}", report.to_table(&format!("{mode:?}").to_lowercase()));
    println!("{json}");
    Ok(())
}

pub fn toy(a: &ToyArgs) -> CliResult {
    let config = ToyConfig {
        models_per_class: a.models,
        train_sketches_per_class: a.train,
        test_sketches_per_class: a.test,
        seed: a.seed,
    };
    let data = generate_toy(&a.out_dir, &config)?;
    info!(
        "wrote {} entries to {}",
        data.entries.len(),
        data.manifest_path.display()
    );
    Ok(())
}
