//! Per-epoch pair sampling.
//!
//! Every training sketch `s1` yields `kp` similar records and `kn` dissimilar
//! records `(s1, s2, v1, v2, y)`. `v1` always shares `s1`'s class. For
//! similar records `s2` and `v2` come from the same class too; for
//! dissimilar ones both come from a single other class drawn uniformly, so
//! one label describes all three loss terms.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{DatasetManifest, Split};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::loss::Label;

pub const DEFAULT_KP: usize = 2;
pub const DEFAULT_KN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpec {
    pub sketch1: String,
    pub sketch2: String,
    pub view1: String,
    pub view2: String,
    pub label: Label,
}

/// RNG for one epoch's pairing, derived from the run seed.
pub fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    rng
}

#[derive(Default)]
struct ClassMembers<'a> {
    sketches: Vec<&'a str>,
    views: Vec<&'a str>,
}

fn pick_other<'a, R: Rng + ?Sized>(rng: &mut R, pool: &[&'a str], avoid: &str) -> &'a str {
    if pool.len() > 1 {
        loop {
            let c = *pool.choose(rng).expect("non-empty pool");
            if c != avoid {
                return c;
            }
        }
    }
    pool[0]
}

/// Samples one epoch of training pairs from the `train` split of `manifest`.
pub fn sample_pairs<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    kp: usize,
    kn: usize,
    rng: &mut R,
) -> Result<Vec<PairSpec>> {
    let mut classes: BTreeMap<&str, ClassMembers> = BTreeMap::new();
    let train = || {
        manifest
            .entries()
            .iter()
            .filter(|e| e.split == Split::Train)
    };
    for e in train() {
        let members = classes.entry(e.class_label.as_str()).or_default();
        match e.domain {
            Domain::Sketch => members.sketches.push(&e.id),
            Domain::View => members.views.push(&e.id),
        }
    }
    // Classes that can supply the (s2, v2) half of a dissimilar record.
    let negatives: Vec<&str> = classes
        .iter()
        .filter(|(_, m)| !m.sketches.is_empty() && !m.views.is_empty())
        .map(|(c, _)| *c)
        .collect();

    let mut pairs = Vec::new();
    for e in train().filter(|e| e.domain == Domain::Sketch) {
        let own = &classes[e.class_label.as_str()];
        if own.views.is_empty() {
            warn!(
                "sketch {:?}: class {:?} has no views, skipped",
                e.id, e.class_label
            );
            continue;
        }
        let others: Vec<&str> = negatives
            .iter()
            .copied()
            .filter(|c| *c != e.class_label)
            .collect();
        if kn > 0 && others.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "dissimilar pairs for class {:?} need a second class with sketches and views",
                e.class_label
            )));
        }
        for _ in 0..kp {
            let view1 = *own.views.choose(rng).expect("checked non-empty");
            pairs.push(PairSpec {
                sketch1: e.id.clone(),
                sketch2: pick_other(rng, &own.sketches, &e.id).to_owned(),
                view1: view1.to_owned(),
                view2: pick_other(rng, &own.views, view1).to_owned(),
                label: Label::Similar,
            });
        }
        for _ in 0..kn {
            let view1 = *own.views.choose(rng).expect("checked non-empty");
            let other = &classes[*others.choose(rng).expect("checked non-empty")];
            pairs.push(PairSpec {
                sketch1: e.id.clone(),
                sketch2: (*other
                    .sketches
                    .choose(rng)
                    .expect("negative classes have sketches"))
                .to_owned(),
                view1: view1.to_owned(),
                view2: (*other
                    .views
                    .choose(rng)
                    .expect("negative classes have views"))
                .to_owned(),
                label: Label::Dissimilar,
            });
        }
    }
    debug_assert!(check_pair_labels(manifest, &pairs).is_ok());
    Ok(pairs)
}

/// Verifies the class relations each record's label promises.
pub fn check_pair_labels(manifest: &DatasetManifest, pairs: &[PairSpec]) -> Result<()> {
    let class_of = |id: &str| -> Result<&str> {
        manifest
            .get(id)
            .map(|e| e.class_label.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("pair references unknown id {id:?}")))
    };
    for (i, p) in pairs.iter().enumerate() {
        let (s1, s2, v1, v2) = (
            class_of(&p.sketch1)?,
            class_of(&p.sketch2)?,
            class_of(&p.view1)?,
            class_of(&p.view2)?,
        );
        let ok = match p.label {
            Label::Similar => s1 == s2 && s1 == v1 && s1 == v2,
            Label::Dissimilar => s1 == v1 && s2 == v2 && s1 != s2,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "pair {i} violates its label: {p:?}"
            )));
        }
    }
    Ok(())
}
