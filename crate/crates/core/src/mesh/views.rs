//! Rendering the two dataset-wide views of every model in a directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use super::obj::load_obj;
use super::render::render_lines;
use super::viewpoint::ViewPairConfig;
use crate::dataset::{ManifestEntry, Split};
use crate::domain::Domain;
use crate::error::{Error, Result};

pub const UNLABELED: &str = "unlabeled";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSource {
    pub path: PathBuf,
    pub model_id: String,
    pub class_label: String,
}

/// Every `.obj` file under `dir`, sorted by path. The class is the name of
/// the file's parent directory, or [`UNLABELED`] for files directly in
/// `dir`. The model id is the file stem.
pub fn discover_models(dir: &Path) -> Result<Vec<ModelSource>> {
    let mut files = Vec::new();
    collect_obj(dir, &mut files)?;
    files.sort();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for path in files {
        let model_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("non-UTF-8 file name {}", path.display()))
            })?
            .to_owned();
        if !seen.insert(model_id.clone()) {
            return Err(Error::InvalidArgument(format!(
                "model id {model_id:?} appears twice (at {})",
                path.display()
            )));
        }
        let parent = path.parent().unwrap_or(dir);
        let class_label = if parent == dir {
            UNLABELED.to_owned()
        } else {
            parent
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or(UNLABELED)
                .to_owned()
        };
        out.push(ModelSource {
            path,
            model_id,
            class_label,
        });
    }
    Ok(out)
}

fn collect_obj(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_obj(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("obj"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Model id and the error that stopped it.
pub type RenderFailure = (String, Error);

/// Renders `{model_id}_v1.pgm` and `{model_id}_v2.pgm` into `out_dir` and
/// returns their manifest entries (paths relative to `out_dir`) in model
/// order. Models that fail to load are logged and listed in the second
/// return value.
pub fn render_views(
    models: &[ModelSource],
    out_dir: &Path,
    views: &ViewPairConfig,
) -> Result<(Vec<ManifestEntry>, Vec<RenderFailure>)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<Result<Vec<ManifestEntry>>> = models
        .par_iter()
        .map(|m| {
            let mesh = load_obj(&m.path)?;
            let mut entries = Vec::with_capacity(2);
            for (k, vp) in [(1, &views.v1), (2, &views.v2)] {
                let id = format!("{}_v{k}", m.model_id);
                let file = format!("{id}.pgm");
                render_lines(&mesh, vp).save(&out_dir.join(&file))?;
                entries.push(ManifestEntry {
                    id,
                    class_label: m.class_label.clone(),
                    domain: Domain::View,
                    image_path: file,
                    model_id: Some(m.model_id.clone()),
                    split: Split::Train,
                });
            }
            Ok(entries)
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (m, r) in models.iter().zip(results) {
        match r {
            Ok(e) => entries.extend(e),
            Err(err) => {
                warn!("{}: {err}", m.path.display());
                failures.push((m.model_id.clone(), err));
            }
        }
    }
    Ok((entries, failures))
}
