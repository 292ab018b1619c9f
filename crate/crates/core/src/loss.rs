//! Pairwise contrastive loss over L1 feature distance and the three-term
//! cross-domain objective built from it.
//!
//! With `D = ‖f1 − f2‖₁`:
//!
//! ```text
//! L(f1, f2, y) = (1 − y)·α·D² + y·β·exp(γ·D)
//! ```
//!
//! `y = 0` marks a similar pair (pulled together quadratically) and `y = 1`
//! a dissimilar pair (pushed apart by a penalty that peaks at `D = 0`).

use serde::{Deserialize, Serialize};

use crate::tensor::Real;

/// Fixed constants of the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants;

impl LossConstants {
    pub const C_P: f64 = 0.2;
    pub const C_N: f64 = 10.0;
    pub const ALPHA: f64 = 1.0 / Self::C_P;
    pub const BETA: f64 = Self::C_N;
    pub const GAMMA: f64 = -2.77 / Self::C_N;
}

/// Binary pair label. `Similar` is `y = 0`, `Dissimilar` is `y = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Similar,
    Dissimilar,
}

impl Label {
    pub fn y(self) -> u8 {
        match self {
            Label::Similar => 0,
            Label::Dissimilar => 1,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.y()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(y: u8) -> Result<Self, String> {
        match y {
            0 => Ok(Label::Similar),
            1 => Ok(Label::Dissimilar),
            other => Err(format!("pair label must be 0 or 1, got {other}")),
        }
    }
}

/// Loss value plus gradients w.r.t. both feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss<T> {
    pub loss: T,
    pub distance: T,
    pub grad_a: Vec<T>,
    pub grad_b: Vec<T>,
}

pub fn l1_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

/// Contrastive loss and its exact gradient. The subgradient of `|·|` at zero
/// is taken as zero.
pub fn contrastive_loss<T: Real>(f1: &[T], f2: &[T], label: Label) -> PairLoss<T> {
    assert_eq!(f1.len(), f2.len(), "feature vectors differ in length");
    let d = l1_distance(f1, f2);
    let (loss, dl_dd) = match label {
        Label::Similar => {
            let alpha = T::lit(LossConstants::ALPHA);
            (alpha * d * d, T::lit(2.0) * alpha * d)
        }
        Label::Dissimilar => {
            let beta = T::lit(LossConstants::BETA);
            let gamma = T::lit(LossConstants::GAMMA);
            let e = (gamma * d).exp();
            (beta * e, beta * gamma * e)
        }
    };
    let grad_a: Vec<T> = f1
        .iter()
        .zip(f2)
        .map(|(&x, &y)| {
            let diff = x - y;
            if diff > T::zero() {
                dl_dd
            } else if diff < T::zero() {
                -dl_dd
            } else {
                T::zero()
            }
        })
        .collect();
    let grad_b = grad_a.iter().map(|&g| -g).collect();
    PairLoss {
        loss,
        distance: d,
        grad_a,
        grad_b,
    }
}

/// Per-branch gradient scale applied when routing each loss term into the
/// networks. Loss values are never scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientRouting {
    /// Applied to both branches of the sketch–sketch and view–view terms.
    pub within_domain: f64,
    /// Applied to both branches of the sketch–view term(s).
    pub cross_domain: f64,
}

impl GradientRouting {
    /// Plain sum of term gradients.
    pub const RAW: GradientRouting = GradientRouting {
        within_domain: 1.0,
        cross_domain: 1.0,
    };

    /// Averages the two branch gradients a term sends into one network.
    ///
    /// Within-domain terms always feed both branches into one network. The
    /// cross term feeds one branch into each network, unless both domains
    /// share a single network.
    pub fn siamese_average(identical_networks: bool) -> Self {
        GradientRouting {
            within_domain: 0.5,
            cross_domain: if identical_networks { 0.5 } else { 1.0 },
        }
    }
}

/// Terms included in the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CombinedTerms {
    /// Adds `L(s2, v2, y)` next to the `L(s1, v1, y)` cross term.
    pub symmetric_cross: bool,
}

/// Loss and gradients for one `(s1, s2, v1, v2, y)` record.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss<T> {
    pub loss: T,
    pub grad_s1: Vec<T>,
    pub grad_s2: Vec<T>,
    pub grad_v1: Vec<T>,
    pub grad_v2: Vec<T>,
}

/// `L(s1,s2,y) + L(v1,v2,y) + L(s1,v1,y)` with summed gradients.
pub fn combined_loss<T: Real>(
    fs1: &[T],
    fs2: &[T],
    fv1: &[T],
    fv2: &[T],
    label: Label,
) -> CombinedLoss<T> {
    combined_loss_with(
        fs1,
        fs2,
        fv1,
        fv2,
        label,
        CombinedTerms::default(),
        GradientRouting::RAW,
    )
}

pub fn combined_loss_with<T: Real>(
    fs1: &[T],
    fs2: &[T],
    fv1: &[T],
    fv2: &[T],
    label: Label,
    terms: CombinedTerms,
    routing: GradientRouting,
) -> CombinedLoss<T> {
    let n = fs1.len();
    let mut out = CombinedLoss {
        loss: T::zero(),
        grad_s1: vec![T::zero(); n],
        grad_s2: vec![T::zero(); n],
        grad_v1: vec![T::zero(); n],
        grad_v2: vec![T::zero(); n],
    };
    let within = T::lit(routing.within_domain);
    let cross = T::lit(routing.cross_domain);

    let sketches = contrastive_loss(fs1, fs2, label);
    out.loss += sketches.loss;
    axpy(&mut out.grad_s1, within, &sketches.grad_a);
    axpy(&mut out.grad_s2, within, &sketches.grad_b);

    let views = contrastive_loss(fv1, fv2, label);
    out.loss += views.loss;
    axpy(&mut out.grad_v1, within, &views.grad_a);
    axpy(&mut out.grad_v2, within, &views.grad_b);

    let cross1 = contrastive_loss(fs1, fv1, label);
    out.loss += cross1.loss;
    axpy(&mut out.grad_s1, cross, &cross1.grad_a);
    axpy(&mut out.grad_v1, cross, &cross1.grad_b);

    if terms.symmetric_cross {
        let cross2 = contrastive_loss(fs2, fv2, label);
        out.loss += cross2.loss;
        axpy(&mut out.grad_s2, cross, &cross2.grad_a);
        axpy(&mut out.grad_v2, cross, &cross2.grad_b);
    }
    out
}

fn axpy<T: Real>(dst: &mut [T], scale: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}
