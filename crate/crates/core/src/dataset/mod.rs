//! Manifests, image I/O, preprocessing, augmentation and pair sampling.

pub mod augment;
pub mod image;
pub mod manifest;
pub mod pairs;
pub mod preprocess;

pub use augment::{apply_affine, augment_sketch, materialize_augmentations, AffineJitter};
pub use image::{decode_image, load_image, GrayImage};
pub use manifest::{load_manifest, write_manifest, DatasetManifest, ManifestEntry, Split};
pub use pairs::{check_pair_labels, epoch_rng, sample_pairs, PairSpec, DEFAULT_KN, DEFAULT_KP};
pub use preprocess::preprocess;
