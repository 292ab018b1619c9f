//! Feature index, L1 ranking and the 2-D PCA projection of the embedding.
//!
//! A sketch matches a model when it matches one of its views, so a model's
//! distance to a query is the smaller of its two view distances.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_image, preprocess, DatasetManifest};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::nn::FEATURE_DIM;
use crate::train::SiameseModel;

pub const INDEX_MAGIC: &[u8; 4] = b"SBFI";
pub const INDEX_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub class_label: String,
    pub domain: Domain,
    pub model_id: Option<String>,
    pub feature: Vec<f32>,
}

/// Embeddings of a dataset bound to the checkpoint that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureIndex {
    entries: Vec<IndexEntry>,
    fingerprint: [u8; 32],
}

impl FeatureIndex {
    pub fn new(entries: Vec<IndexEntry>, fingerprint: [u8; 32]) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.feature.len() != FEATURE_DIM {
                return Err(Error::ShapeMismatch {
                    op: "FeatureIndex entry",
                    expected: vec![FEATURE_DIM],
                    actual: vec![e.feature.len()],
                });
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate index id {:?}",
                    e.id
                )));
            }
        }
        Ok(FeatureIndex {
            entries,
            fingerprint,
        })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Fails unless the index was built by `model`.
    pub fn check_model(&self, model: &SiameseModel) -> Result<()> {
        if model.fingerprint() != self.fingerprint {
            return Err(Error::InvalidArgument(
                "index fingerprint does not match the checkpoint; re-run extract".into(),
            ));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(10 + self.entries.len() * (FEATURE_DIM * 4 + 32) + 32);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        let count = u32::try_from(self.entries.len())
            .map_err(|_| Error::format("index", "more than u32::MAX entries"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for e in &self.entries {
            put_str(&mut out, &e.id)?;
            put_str(&mut out, &e.class_label)?;
            out.push(match e.domain {
                Domain::Sketch => 0,
                Domain::View => 1,
            });
            match &e.model_id {
                Some(m) => {
                    out.push(1);
                    put_str(&mut out, m)?;
                }
                None => out.push(0),
            }
            for v in &e.feature {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.fingerprint);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != INDEX_MAGIC {
            return Err(Error::format("index", "bad magic"));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != INDEX_VERSION {
            return Err(Error::format(
                "index",
                format!("unsupported version {version}"),
            ));
        }
        let count = u32::from_le_bytes(r.array()?) as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id = r.string()?;
            let class_label = r.string()?;
            let domain = match r.take(1)?[0] {
                0 => Domain::Sketch,
                1 => Domain::View,
                b => return Err(Error::format("index", format!("bad domain byte {b}"))),
            };
            let model_id = match r.take(1)?[0] {
                0 => None,
                1 => Some(r.string()?),
                b => return Err(Error::format("index", format!("bad model flag {b}"))),
            };
            let feature = r
                .take(FEATURE_DIM * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push(IndexEntry {
                id,
                class_label,
                domain,
                model_id,
                feature,
            });
        }
        let fingerprint = r.array()?;
        if r.pos != bytes.len() {
            return Err(Error::format(
                "index",
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }
        FeatureIndex::new(entries, fingerprint)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::format("index", format!("string too long: {s:.32}…")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| Error::format("index", format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("take returns N bytes"))
    }

    fn string(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|e| Error::format("index", e.to_string()))
    }
}

/// Embeds every manifest entry with the network of its domain. Entries
/// whose image cannot be read or has no ink are skipped with a warning.
pub fn extract_features(model: &SiameseModel, manifest: &DatasetManifest) -> Result<FeatureIndex> {
    let entries: Vec<Option<IndexEntry>> = manifest
        .entries()
        .par_iter()
        .map(|e| {
            let path = manifest.resolve(e);
            let feature = load_image(&path)
                .and_then(|img| preprocess(&img))
                .and_then(|t| model.embed(e.domain, &t));
            match feature {
                Ok(feature) => Some(IndexEntry {
                    id: e.id.clone(),
                    class_label: e.class_label.clone(),
                    domain: e.domain,
                    model_id: e.model_id.clone(),
                    feature,
                }),
                Err(err) => {
                    warn!("skipping {:?} ({}): {err}", e.id, path.display());
                    None
                }
            }
        })
        .collect();
    let entries: Vec<IndexEntry> = entries.into_iter().flatten().collect();
    if entries.is_empty() {
        return Err(Error::Empty("no manifest entry produced a feature".into()));
    }
    FeatureIndex::new(entries, model.fingerprint())
}

/// `Σ|a_i − b_i|`, accumulated in f64.
pub fn l1_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub target_id: String,
    pub distance: f64,
}

/// Gallery ranked by ascending distance, ties broken by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

fn sort_hits(hits: &mut [Hit]) {
    hits.sort_by(|a, b| match a.distance.total_cmp(&b.distance) {
        Ordering::Equal => a.target_id.cmp(&b.target_id),
        o => o,
    });
}

/// Ranks 3-D models by the distance to their nearest view. Models without
/// exactly two view features are left out.
pub fn rank_models(query_id: &str, query: &[f32], index: &FeatureIndex) -> RankedList {
    let mut per_model: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for e in index.entries().iter().filter(|e| e.domain == Domain::View) {
        let Some(model) = e.model_id.as_deref() else {
            warn!("view {:?} has no model id", e.id);
            continue;
        };
        let d = l1_distance(query, &e.feature);
        let slot = per_model.entry(model).or_insert((f64::INFINITY, 0));
        slot.0 = slot.0.min(d);
        slot.1 += 1;
    }
    let mut hits: Vec<Hit> = per_model
        .into_iter()
        .filter_map(|(model, (d, n))| {
            if n == 2 {
                Some(Hit {
                    target_id: model.to_owned(),
                    distance: d,
                })
            } else {
                warn!("model {model:?} has {n} view features, expected 2; excluded");
                None
            }
        })
        .collect();
    sort_hits(&mut hits);
    RankedList {
        query_id: query_id.to_owned(),
        hits,
    }
}

/// Ranks the entries of one domain, leaving out the query's own id.
pub fn rank_within_domain(
    query_id: &str,
    query: &[f32],
    index: &FeatureIndex,
    domain: Domain,
) -> RankedList {
    let mut hits: Vec<Hit> = index
        .entries()
        .iter()
        .filter(|e| e.domain == domain && e.id != query_id)
        .map(|e| Hit {
            target_id: e.id.clone(),
            distance: l1_distance(query, &e.feature),
        })
        .collect();
    sort_hits(&mut hits);
    RankedList {
        query_id: query_id.to_owned(),
        hits,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub id: String,
    pub domain: Domain,
    pub class: String,
    pub x: f64,
    pub y: f64,
}

/// Top-two principal directions of a set of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Unit directions, largest eigenvalue first.
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
}

impl Pca2 {
    pub fn project(&self, feature: &[f32]) -> (f64, f64) {
        let c = |k: usize| -> f64 {
            feature
                .iter()
                .zip(&self.mean)
                .zip(&self.components[k])
                .map(|((&f, &m), &w)| (f64::from(f) - m) * w)
                .sum()
        };
        (c(0), c(1))
    }
}

/// Fits PCA to `features` (rows of equal length). Covariance is normalized
/// by `n`. Each component is signed so its largest-magnitude loading is
/// positive.
pub fn fit_pca2(features: &[&[f32]]) -> Result<Pca2> {
    let n = features.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 3 points, got {n}"
        )));
    }
    let dim = features[0].len();
    if dim < 2 || features.iter().any(|f| f.len() != dim) {
        return Err(Error::InvalidArgument(
            "PCA points must share a dimension ≥ 2".into(),
        ));
    }
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(*f) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| f64::from(features[i][j]) - mean[j]);
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let component = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let mut lead = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    Ok(Pca2 {
        mean,
        components: [component(0), component(1)],
        eigenvalues: [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]],
    })
}

/// 2-D PCA coordinates of every index entry.
pub fn pca_2d(index: &FeatureIndex) -> Result<Vec<EmbeddingPoint>> {
    let features: Vec<&[f32]> = index
        .entries()
        .iter()
        .map(|e| e.feature.as_slice())
        .collect();
    let pca = fit_pca2(&features)?;
    Ok(index
        .entries()
        .iter()
        .map(|e| {
            let (x, y) = pca.project(&e.feature);
            EmbeddingPoint {
                id: e.id.clone(),
                domain: e.domain,
                class: e.class_label.clone(),
                x,
                y,
            }
        })
        .collect())
}
