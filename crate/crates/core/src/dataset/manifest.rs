//! JSON-lines dataset manifests.
//!
//! One object per line:
//!
//! ```json
//! {"id":"chair_003","class_label":"chair","domain":"sketch","image_path":"sketches/chair_003.pgm"}
//! {"id":"m12_v1","class_label":"chair","domain":"view","image_path":"views/m12_v1.pgm","model_id":"m12"}
//! ```
//!
//! Relative image paths resolve against the manifest's directory.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub class_label: String,
    pub domain: Domain,
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default)]
    pub split: Split,
}

/// A validated set of manifest entries.
#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    root: PathBuf,
}

impl DatasetManifest {
    /// Validates entries; `lines[i]` is the source line of entry `i`, used in
    /// diagnostics.
    fn build(
        entries: Vec<ManifestEntry>,
        lines: Vec<usize>,
        root: PathBuf,
        path: &Path,
    ) -> Result<Self> {
        let err = |line: usize, message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut ids = HashSet::new();
        let mut views_per_model: HashMap<&str, (usize, usize)> = HashMap::new();
        for (entry, &line) in entries.iter().zip(&lines) {
            if entry.id.is_empty() {
                return Err(err(line, "empty id".into()));
            }
            if !ids.insert(entry.id.as_str()) {
                return Err(err(line, format!("duplicate id {:?}", entry.id)));
            }
            if entry.domain == Domain::View {
                let model = entry.model_id.as_deref().ok_or_else(|| {
                    err(line, format!("view entry {:?} has no model_id", entry.id))
                })?;
                views_per_model.entry(model).or_insert((0, line)).0 += 1;
            }
        }
        let mut bad: Vec<_> = views_per_model
            .into_iter()
            .filter(|(_, (n, _))| *n != 2)
            .collect();
        bad.sort_by_key(|(_, (_, line))| *line);
        if let Some((model, (n, line))) = bad.first() {
            return Err(err(
                *line,
                format!("model {model:?} has {n} view entries, expected 2"),
            ));
        }
        Ok(DatasetManifest { entries, root })
    }

    /// Builds a manifest from in-memory entries whose relative paths resolve
    /// against `root`.
    pub fn from_entries(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Result<Self> {
        let lines = (1..=entries.len()).collect();
        DatasetManifest::build(entries, lines, root.into(), Path::new("<memory>"))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Entries of one split, keeping the root.
    pub fn split(&self, split: Split) -> DatasetManifest {
        self.filtered(|e| e.split == split)
    }

    /// Entries matching `keep`. Model view pairs are kept or dropped together
    /// by callers; the result is not re-validated.
    pub fn filtered(&self, keep: impl Fn(&ManifestEntry) -> bool) -> DatasetManifest {
        DatasetManifest {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
            root: self.root.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_manifest(path, &self.entries)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
        lines.push(i + 1);
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::build(entries, lines, root, path)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e).expect("manifest entries serialize");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
