//! Camera directions on the unit sphere and the dataset-wide view pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Allowed elevation range in degrees. Keeps cameras above the horizon of
/// upright models without looking straight down.
pub const ELEVATION_BAND: (f64, f64) = (15.0, 45.0);
/// The two views must be further apart than this, in degrees.
pub const MIN_SEPARATION_DEG: f64 = 45.0;
const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    /// Degrees in `[0, 360)`, measured from +Z toward +X.
    pub azimuth: f64,
    /// Degrees above the XZ plane.
    pub elevation: f64,
}

impl Viewpoint {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Viewpoint { azimuth, elevation }
    }

    /// Unit vector from the origin toward the camera.
    pub fn direction(&self) -> Vec3 {
        let (sa, ca) = self.azimuth.to_radians().sin_cos();
        let (se, ce) = self.elevation.to_radians().sin_cos();
        [ce * sa, se, ce * ca]
    }
}

/// Great-circle angle between two viewpoints, in degrees.
pub fn separation_deg(a: &Viewpoint, b: &Viewpoint) -> f64 {
    let c = super::dot(a.direction(), b.direction()).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewPairConfig {
    pub v1: Viewpoint,
    pub v2: Viewpoint,
    pub seed: u64,
}

fn draw<R: Rng>(rng: &mut R) -> Viewpoint {
    Viewpoint {
        azimuth: rng.random_range(0.0..360.0),
        elevation: rng.random_range(ELEVATION_BAND.0..=ELEVATION_BAND.1),
    }
}

/// Draws two viewpoints from the elevation band whose separation exceeds
/// [`MIN_SEPARATION_DEG`].
pub fn pick_viewpoints(seed: u64) -> Result<ViewPairConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v1 = draw(&mut rng);
    for _ in 0..MAX_DRAWS {
        let v2 = draw(&mut rng);
        if separation_deg(&v1, &v2) > MIN_SEPARATION_DEG {
            return Ok(ViewPairConfig { v1, v2, seed });
        }
    }
    Err(Error::InvalidArgument(format!(
        "no viewpoint pair separated by more than {MIN_SEPARATION_DEG}° after {MAX_DRAWS} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_at_thirty_degrees() {
        let s = separation_deg(&Viewpoint::new(0.0, 30.0), &Viewpoint::new(90.0, 30.0));
        // cos s = cos²30·cos90 + sin²30 = 1/4
        assert!((s - 0.25f64.acos().to_degrees()).abs() < 1e-9);
        assert!((s - 75.5225).abs() < 1e-3);
    }

    #[test]
    fn fixed_seed_is_stable() {
        assert_eq!(pick_viewpoints(11).unwrap(), pick_viewpoints(11).unwrap());
        assert_ne!(
            pick_viewpoints(11).unwrap().v1,
            pick_viewpoints(12).unwrap().v1
        );
    }

    #[test]
    fn pairs_respect_band_and_separation() {
        for seed in 0..1000 {
            let c = pick_viewpoints(seed).unwrap();
            assert!(separation_deg(&c.v1, &c.v2) > MIN_SEPARATION_DEG);
            for v in [c.v1, c.v2] {
                assert!((ELEVATION_BAND.0..=ELEVATION_BAND.1).contains(&v.elevation));
                assert!((0.0..360.0).contains(&v.azimuth));
            }
        }
    }
}
