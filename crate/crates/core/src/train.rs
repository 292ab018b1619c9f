//! Coupled Siamese model and the epoch training loop.
//!
//! Each minibatch record `(s1, s2, v1, v2, y)` runs `s1, s2` through the
//! sketch network and `v1, v2` through the view network, scores them with
//! [`combined_loss_with`], and routes the feature gradients back through the
//! network that produced them. An image used by several records in one
//! minibatch is forwarded once; its upstream gradients are summed before a
//! single backward pass, which is exact because backprop is linear in the
//! upstream gradient.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    epoch_rng, load_image, preprocess, sample_pairs, DatasetManifest, PairSpec, Split,
};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::loss::{combined_loss_with, CombinedTerms, GradientRouting};
use crate::nn::checkpoint::{
    decode_tensors, encode_tensors, network_from_tensors, network_tensors, NamedTensor,
};
use crate::nn::{sgd_step, ForwardTrace, NetworkParams, FEATURE_DIM};
use crate::tensor::Tensor;

pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const LR_DECAY_FACTOR: f64 = 0.9;
pub const LR_DECAY_EVERY: usize = 5;

const EPOCH_TENSOR: &str = "meta.epoch";
/// Images per backward task. Fixed so the reduction order never depends on
/// the thread count.
const BACKWARD_CHUNK: usize = 4;

/// Epoch budget presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetProfile {
    Psb,
    Shrec13,
}

impl DatasetProfile {
    pub fn default_epochs(self) -> usize {
        match self {
            DatasetProfile::Psb => 50,
            DatasetProfile::Shrec13 => 20,
        }
    }
}

impl std::str::FromStr for DatasetProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psb" => Ok(DatasetProfile::Psb),
            "shrec13" => Ok(DatasetProfile::Shrec13),
            other => Err(Error::InvalidArgument(format!(
                "unknown profile {other:?} (psb|shrec13)"
            ))),
        }
    }
}

/// Sketch and view networks. In identical mode one parameter set serves
/// both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseModel {
    sketch: NetworkParams<f32>,
    view: Option<NetworkParams<f32>>,
}

impl SiameseModel {
    /// Fresh model with Glorot-initialized weights drawn from `seed`.
    pub fn new(seed: u64, identical: bool) -> Self {
        let mut rng = epoch_rng(seed, u64::MAX);
        let sketch = NetworkParams::init(&mut rng);
        let view = (!identical).then(|| NetworkParams::init(&mut rng));
        SiameseModel { sketch, view }
    }

    pub fn from_networks(sketch: NetworkParams<f32>, view: Option<NetworkParams<f32>>) -> Self {
        SiameseModel { sketch, view }
    }

    pub fn is_identical(&self) -> bool {
        self.view.is_none()
    }

    pub fn net(&self, domain: Domain) -> &NetworkParams<f32> {
        match (domain, &self.view) {
            (Domain::View, Some(v)) => v,
            _ => &self.sketch,
        }
    }

    pub fn net_mut(&mut self, domain: Domain) -> &mut NetworkParams<f32> {
        match (domain, &mut self.view) {
            (Domain::View, Some(v)) => v,
            _ => &mut self.sketch,
        }
    }

    pub fn embed(&self, domain: Domain, image: &Tensor<f32>) -> Result<Vec<f32>> {
        self.net(domain).forward(image)
    }

    /// Parameter tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<NamedTensor> {
        match &self.view {
            Some(view) => {
                let mut t = network_tensors("sketch", &self.sketch);
                t.extend(network_tensors("view", view));
                t
            }
            None => network_tensors("shared", &self.sketch),
        }
    }

    /// Rebuilds a model from checkpoint tensors. Returns the stored epoch
    /// count, 0 if absent.
    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<(Self, usize)> {
        let by_name: HashMap<&str, &Tensor<f32>> = tensors
            .iter()
            .map(|t| (t.name.as_str(), &t.tensor))
            .collect();
        let epoch = match by_name.get(EPOCH_TENSOR) {
            Some(t) if t.len() == 1 && t.data()[0] >= 0.0 => t.data()[0] as usize,
            Some(_) => {
                return Err(Error::format(
                    "checkpoint",
                    format!("malformed {EPOCH_TENSOR}"),
                ))
            }
            None => 0,
        };
        let model = if by_name.keys().any(|n| n.starts_with("shared.")) {
            SiameseModel {
                sketch: network_from_tensors("shared", &by_name)?,
                view: None,
            }
        } else {
            SiameseModel {
                sketch: network_from_tensors("sketch", &by_name)?,
                view: Some(network_from_tensors("view", &by_name)?),
            }
        };
        model.sketch.validate()?;
        if let Some(v) = &model.view {
            v.validate()?;
        }
        Ok((model, epoch))
    }

    pub fn encode(&self, epoch: usize) -> Result<Vec<u8>> {
        let mut tensors = self.tensors();
        tensors.push(NamedTensor {
            name: EPOCH_TENSOR.into(),
            tensor: Tensor::from_vec(&[1], vec![epoch as f32])?,
        });
        encode_tensors(&tensors)
    }

    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        Self::from_tensors(&decode_tensors(bytes)?)
    }

    pub fn save(&self, path: &Path, epoch: usize) -> Result<()> {
        std::fs::write(path, self.encode(epoch)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, usize)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// SHA-256 over the encoded parameter tensors. Independent of the epoch
    /// counter.
    pub fn fingerprint(&self) -> [u8; 32] {
        let bytes = encode_tensors(&self.tensors()).expect("parameter tensors always encode");
        Sha256::digest(&bytes).into()
    }
}

/// Preprocessed `[1,100,100]` inputs keyed by manifest id.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    images: HashMap<String, Tensor<f32>>,
}

impl TrainingSet {
    /// Loads and preprocesses every train-split entry of `manifest`.
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let entries: Vec<_> = manifest
            .entries()
            .iter()
            .filter(|e| e.split == Split::Train)
            .collect();
        let images = entries
            .par_iter()
            .map(|e| {
                let img = load_image(&manifest.resolve(e))?;
                Ok((e.id.clone(), preprocess(&img)?))
            })
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(TrainingSet { images })
    }

    pub fn insert(&mut self, id: impl Into<String>, image: Tensor<f32>) {
        self.images.insert(id.into(), image);
    }

    pub fn get(&self, id: &str) -> Result<&Tensor<f32>> {
        self.images
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no training image for id {id:?}")))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub kp: usize,
    pub kn: usize,
    pub seed: u64,
    pub terms: CombinedTerms,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DatasetProfile::Psb.default_epochs(),
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            kp: crate::dataset::DEFAULT_KP,
            kn: crate::dataset::DEFAULT_KN,
            seed: 0,
            terms: CombinedTerms::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Step size for the 0-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * LR_DECAY_FACTOR.powi((epoch / LR_DECAY_EVERY) as i32)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub pairs: usize,
}

/// One pass of SGD over `pairs` in minibatches of `batch_size`, in the
/// given order. Returns the summed loss.
pub fn train_pairs(
    model: &mut SiameseModel,
    set: &TrainingSet,
    pairs: &[PairSpec],
    learning_rate: f64,
    batch_size: usize,
    terms: CombinedTerms,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut total = 0.0;
    for (b, batch) in pairs.chunks(batch_size).enumerate() {
        total += train_minibatch(model, set, batch, b * batch_size, learning_rate, terms)?;
    }
    Ok(total)
}

/// Samples a fresh pairing for the 0-based `epoch`, shuffles it, and trains
/// one pass over it.
pub fn train_epoch(
    model: &mut SiameseModel,
    set: &TrainingSet,
    manifest: &DatasetManifest,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    config.validate()?;
    let mut rng = epoch_rng(config.seed, epoch as u64);
    let mut pairs = sample_pairs(manifest, config.kp, config.kn, &mut rng)?;
    pairs.shuffle(&mut rng);
    let total = train_pairs(
        model,
        set,
        &pairs,
        config.learning_rate_at(epoch),
        config.batch_size,
        config.terms,
    )?;
    Ok(EpochStats {
        epoch: epoch + 1,
        mean_loss: if pairs.is_empty() {
            0.0
        } else {
            total / pairs.len() as f64
        },
        pairs: pairs.len(),
    })
}

/// Runs epochs `start_epoch..config.epochs`, calling `on_epoch` after each.
pub fn train<F>(
    model: &mut SiameseModel,
    set: &TrainingSet,
    manifest: &DatasetManifest,
    config: &TrainConfig,
    start_epoch: usize,
    mut on_epoch: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&SiameseModel, &EpochStats) -> Result<()>,
{
    let mut log = Vec::new();
    for epoch in start_epoch..config.epochs {
        let stats = train_epoch(model, set, manifest, config, epoch)?;
        on_epoch(model, &stats)?;
        log.push(stats);
    }
    Ok(log)
}

type ImageKey<'a> = (Domain, &'a str);

fn train_minibatch(
    model: &mut SiameseModel,
    set: &TrainingSet,
    batch: &[PairSpec],
    first_index: usize,
    learning_rate: f64,
    terms: CombinedTerms,
) -> Result<f64> {
    let mut keys: Vec<ImageKey> = Vec::new();
    let mut slot: HashMap<ImageKey, usize> = HashMap::new();
    let mut record_slots = Vec::with_capacity(batch.len());
    for p in batch {
        let wanted: [ImageKey; 4] = [
            (Domain::Sketch, p.sketch1.as_str()),
            (Domain::Sketch, p.sketch2.as_str()),
            (Domain::View, p.view1.as_str()),
            (Domain::View, p.view2.as_str()),
        ];
        record_slots.push(wanted.map(|k| {
            *slot.entry(k).or_insert_with(|| {
                keys.push(k);
                keys.len() - 1
            })
        }));
    }
    let m = &*model;
    let traces: Vec<ForwardTrace<f32>> = keys
        .par_iter()
        .map(|&(domain, id)| m.net(domain).forward_trace(set.get(id)?))
        .collect::<Result<_>>()?;

    let routing = GradientRouting::siamese_average(model.is_identical());
    let inv_batch = 1.0 / batch.len() as f64;
    let mut upstream = vec![[0.0f64; FEATURE_DIM]; keys.len()];
    let mut total = 0.0;
    for (i, (p, s)) in batch.iter().zip(&record_slots).enumerate() {
        let f =
            |k: usize| -> Vec<f64> { traces[k].features().iter().map(|&v| f64::from(v)).collect() };
        let c = combined_loss_with(
            &f(s[0]),
            &f(s[1]),
            &f(s[2]),
            &f(s[3]),
            p.label,
            terms,
            routing,
        );
        if !c.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                pair_index: first_index + i,
                loss: c.loss,
            });
        }
        total += c.loss;
        for (k, g) in s
            .iter()
            .zip([&c.grad_s1, &c.grad_s2, &c.grad_v1, &c.grad_v2])
        {
            for (u, &gv) in upstream[*k].iter_mut().zip(g) {
                *u += gv * inv_batch;
            }
        }
    }

    // Per-chunk gradient sums for each domain, reduced in chunk order.
    let chunk_grads: Vec<[Option<NetworkParams<f32>>; 2]> = (0..keys.len())
        .collect::<Vec<_>>()
        .par_chunks(BACKWARD_CHUNK)
        .map(|chunk| -> Result<[Option<NetworkParams<f32>>; 2]> {
            let mut acc: [Option<NetworkParams<f32>>; 2] = [None, None];
            for &k in chunk {
                let domain = keys[k].0;
                let up: Vec<f32> = upstream[k].iter().map(|&v| v as f32).collect();
                let g = m.net(domain).backward(&traces[k], &up, false)?.params;
                let d = domain_slot(domain, m.is_identical());
                match &mut acc[d] {
                    Some(a) => a.add_assign(&g),
                    none => *none = Some(g),
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    drop(traces);

    let mut grads: [Option<NetworkParams<f32>>; 2] = [None, None];
    for cg in chunk_grads {
        for (acc, g) in grads.iter_mut().zip(cg) {
            if let Some(g) = g {
                match acc {
                    Some(a) => a.add_assign(&g),
                    none => *none = Some(g),
                }
            }
        }
    }
    let lr = learning_rate as f32;
    for (d, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            let domain = if d == 0 { Domain::Sketch } else { Domain::View };
            sgd_step(model.net_mut(domain), g, lr)?;
        }
    }
    Ok(total)
}

fn domain_slot(domain: Domain, identical: bool) -> usize {
    match domain {
        Domain::View if !identical => 1,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{l1_distance, Label};

    fn blob(cx: usize, cy: usize, r: usize) -> Tensor<f32> {
        let mut t = Tensor::zeros(&[1, 100, 100]);
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                t.data_mut()[y * 100 + x] = 1.0;
            }
        }
        t
    }

    fn pair(label: Label) -> PairSpec {
        PairSpec {
            sketch1: "s1".into(),
            sketch2: "s2".into(),
            view1: "v1".into(),
            view2: "v2".into(),
            label,
        }
    }

    fn tiny_set() -> TrainingSet {
        let mut set = TrainingSet::default();
        set.insert("s1", blob(30, 30, 10));
        set.insert("s2", blob(60, 40, 12));
        set.insert("v1", blob(50, 50, 20));
        set.insert("v2", blob(40, 70, 8));
        set
    }

    #[test]
    fn empty_pairs_leave_model_unchanged() {
        let mut model = SiameseModel::new(3, false);
        let before = model.clone();
        let total = train_pairs(
            &mut model,
            &tiny_set(),
            &[],
            0.01,
            64,
            CombinedTerms::default(),
        )
        .unwrap();
        assert_eq!(total, 0.0);
        assert_eq!(model, before);
    }

    #[test]
    fn similar_pair_distance_shrinks() {
        let set = tiny_set();
        let mut model = SiameseModel::new(5, false);
        let d = |m: &SiameseModel| {
            let s = m.embed(Domain::Sketch, set.get("s1").unwrap()).unwrap();
            let v = m.embed(Domain::View, set.get("v1").unwrap()).unwrap();
            l1_distance(&s, &v)
        };
        let d0 = d(&model);
        let p = [PairSpec {
            sketch2: "s1".into(),
            view2: "v1".into(),
            ..pair(Label::Similar)
        }];
        let mut prev = d0;
        for _ in 0..50 {
            train_pairs(&mut model, &set, &p, 2e-6, 1, CombinedTerms::default()).unwrap();
            let cur = d(&model);
            assert!(cur < prev, "{cur} >= {prev}");
            prev = cur;
        }
        assert!(prev < 0.25 * d0, "{d0} -> {prev}");
    }

    #[test]
    fn identical_mode_shares_parameters() {
        let mut model = SiameseModel::new(1, true);
        assert!(std::ptr::eq(
            model.net(Domain::Sketch),
            model.net(Domain::View)
        ));
        model.net_mut(Domain::View).linear.bias[0] = 0.5;
        assert_eq!(model.net(Domain::Sketch).linear.bias[0], 0.5);
    }

    #[test]
    fn checkpoint_round_trip() {
        for identical in [false, true] {
            let model = SiameseModel::new(9, identical);
            let bytes = model.encode(7).unwrap();
            let (back, epoch) = SiameseModel::decode(&bytes).unwrap();
            assert_eq!(epoch, 7);
            assert_eq!(back, model);
            assert_eq!(back.encode(7).unwrap(), bytes);
            assert_eq!(back.fingerprint(), model.fingerprint());
        }
    }

    #[test]
    fn overflowing_loss_reports_pair_index() {
        let mut set = tiny_set();
        set.insert("v3", Tensor::full(&[1, 100, 100], 1e36));
        let clean = PairSpec {
            view2: "v1".into(),
            ..pair(Label::Similar)
        };
        let poisoned = PairSpec {
            view2: "v3".into(),
            ..pair(Label::Similar)
        };
        let pairs = [clean.clone(), clean, poisoned];
        // Non-negative weights let v3 overflow to +inf without producing NaN.
        let mut model = SiameseModel::new(2, false);
        for p in model.net_mut(Domain::View).params_mut() {
            p.iter_mut().for_each(|v| *v = v.abs());
        }
        match train_pairs(&mut model, &set, &pairs, 1e-30, 1, CombinedTerms::default()) {
            Err(Error::NonFiniteLoss { pair_index, .. }) => assert_eq!(pair_index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn learning_rate_decays_every_five_epochs() {
        let c = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        assert_eq!(c.learning_rate_at(4), 0.01);
        assert!((c.learning_rate_at(5) - 0.009).abs() < 1e-15);
        assert!((c.learning_rate_at(12) - 0.0081).abs() < 1e-15);
    }

    #[test]
    fn profiles() {
        assert_eq!(DatasetProfile::Psb.default_epochs(), 50);
        assert_eq!(
            "shrec13"
                .parse::<DatasetProfile>()
                .unwrap()
                .default_epochs(),
            20
        );
    }
}
