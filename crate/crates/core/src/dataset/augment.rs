//! Random affine jitter for sketches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{load_image, GrayImage};
use super::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::domain::Domain;
use crate::error::Result;

pub const AUGMENTATIONS_PER_SKETCH: usize = 2;
pub const MAX_ROTATION_DEG: f64 = 10.0;
pub const SCALE_RANGE: (f64, f64) = (0.9, 1.1);
pub const MAX_TRANSLATION_PX: f64 = 5.0;

/// Similarity transform about the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineJitter {
    pub rotation_deg: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineJitter {
    pub const IDENTITY: AffineJitter = AffineJitter {
        rotation_deg: 0.0,
        scale: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        AffineJitter {
            rotation_deg: rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
            scale: rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1),
            tx: rng.random_range(-MAX_TRANSLATION_PX..=MAX_TRANSLATION_PX),
            ty: rng.random_range(-MAX_TRANSLATION_PX..=MAX_TRANSLATION_PX),
        }
    }
}

/// Warps `img` by `jitter` with bilinear sampling; uncovered pixels are blank.
pub fn apply_affine(img: &GrayImage, jitter: AffineJitter) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (sin, cos) = jitter.rotation_deg.to_radians().sin_cos();
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let qx = x as f64 - cx - jitter.tx;
            let qy = y as f64 - cy - jitter.ty;
            // inverse rotation, then inverse scale
            let sx = (cos * qx + sin * qy) / jitter.scale + cx;
            let sy = (-sin * qx + cos * qy) / jitter.scale + cy;
            out.set(x, y, img.sample_bilinear(sx, sy));
        }
    }
    out
}

pub fn augment_sketch<R: Rng + ?Sized>(img: &GrayImage, rng: &mut R) -> GrayImage {
    apply_affine(img, AffineJitter::sample(rng))
}

/// Writes `{stem}_aug1.pgm` / `{stem}_aug2.pgm` beside every training sketch
/// and returns the manifest entries for the new files (ids `{id}_aug1`, ...).
pub fn materialize_augmentations(
    manifest: &DatasetManifest,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut added = Vec::new();
    for entry in manifest.entries() {
        if entry.domain != Domain::Sketch || entry.split != Split::Train {
            continue;
        }
        let src = manifest.resolve(entry);
        let img = load_image(&src)?;
        let rel = std::path::Path::new(&entry.image_path);
        let stem = rel
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&entry.id);
        for k in 1..=AUGMENTATIONS_PER_SKETCH {
            let aug = augment_sketch(&img, &mut rng);
            let rel_out = rel.with_file_name(format!("{stem}_aug{k}.pgm"));
            aug.save(&manifest.root().join(&rel_out))?;
            added.push(ManifestEntry {
                id: format!("{}_aug{k}", entry.id),
                class_label: entry.class_label.clone(),
                domain: Domain::Sketch,
                image_path: rel_out.to_string_lossy().into_owned(),
                model_id: None,
                split: Split::Train,
            });
        }
    }
    Ok(added)
}
