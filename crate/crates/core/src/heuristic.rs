//! Proximity-field contact baseline: a signed-distance ramp around the hand proxy,
//! linearly calibrated to measured contact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{ContactError, ContactMap};
use crate::geom::PointCloud;
use crate::handmodel::{proxy_signed_distance, HandProxy};

/// Proximity cutoff in meters.
pub const DEFAULT_D_MAX: f64 = 0.01;
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 4700;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeuristicError {
    #[error("calibration needs at least two distinct psi values among the samples")]
    Degenerate,
    #[error("{psi} psi values for {gt} contact values")]
    LengthMismatch { psi: usize, gt: usize },
    #[error("d_max must be positive and finite, got {0}")]
    InvalidCutoff(f64),
    #[error("at least one hand proxy is required")]
    NoHands,
    #[error(transparent)]
    Contact(#[from] ContactError),
}

/// Per-point proximity scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiField {
    pub values: Vec<f64>,
    pub d_max: f64,
}

/// Score for signed distance `s`: 0 beyond `d_max`, a linear ramp up to 1 at the
/// surface, and `1 + |s|/d_max` under penetration.
#[inline]
pub fn psi_value(s: f64, d_max: f64) -> f64 {
    if s > d_max {
        0.0
    } else if s >= 0.0 {
        (d_max - s) / d_max
    } else {
        1.0 - s / d_max
    }
}

/// Proximity field over the union of the hand proxies (bimanual grasps take the nearer hand).
pub fn psi(points: &PointCloud, proxies: &[HandProxy], d_max: f64) -> Result<PsiField, HeuristicError> {
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(HeuristicError::InvalidCutoff(d_max));
    }
    if proxies.is_empty() {
        return Err(HeuristicError::NoHands);
    }
    let values = points
        .points
        .par_iter()
        .with_min_len(256)
        .map(|p| {
            let s = proxies
                .iter()
                .map(|h| proxy_signed_distance(h, p))
                .fold(f64::INFINITY, f64::min);
            psi_value(s, d_max)
        })
        .collect();
    Ok(PsiField { values, d_max })
}

/// Least-squares line `gt ≈ a·ψ + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub a: f64,
    pub b: f64,
    /// Number of points the line was fitted on.
    pub n: usize,
    pub seed: u64,
}

impl Calibration {
    /// Identity mapping, used for the uncalibrated baseline.
    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0, n: 0, seed: 0 }
    }
}

/// Ordinary least squares on `n` points drawn uniformly without replacement
/// (all points when `n` exceeds the count).
pub fn calibrate(psi: &[f64], gt: &[f64], n: usize, seed: u64) -> Result<Calibration, HeuristicError> {
    if psi.len() != gt.len() {
        return Err(HeuristicError::LengthMismatch {
            psi: psi.len(),
            gt: gt.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n.min(psi.len());
    let mut idx = rand::seq::index::sample(&mut rng, psi.len(), take).into_vec();
    idx.sort_unstable();
    let m = idx.len() as f64;
    let mx = idx.iter().map(|&i| psi[i]).sum::<f64>() / m;
    let my = idx.iter().map(|&i| gt[i]).sum::<f64>() / m;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &i in &idx {
        let dx = psi[i] - mx;
        sxx += dx * dx;
        sxy += dx * (gt[i] - my);
    }
    let spread = idx.iter().map(|&i| (psi[i] - mx).abs()).fold(0.0, f64::max);
    if take < 2 || !(spread > 1e-12 * mx.abs().max(1.0)) {
        return Err(HeuristicError::Degenerate);
    }
    let a = sxy / sxx;
    Ok(Calibration {
        a,
        b: my - a * mx,
        n: take,
        seed,
    })
}

/// Calibration across a corpus of grasps. Samples are drawn from the pooled contact
/// points, i.e. vertices whose measured contact is nonzero; points the hand never
/// touched carry no information about contact intensity.
pub fn calibrate_corpus(
    grasps: &[(&PsiField, &ContactMap)],
    n: usize,
    seed: u64,
) -> Result<Calibration, HeuristicError> {
    let mut psi_all = Vec::new();
    let mut gt_all = Vec::new();
    for (field, gt) in grasps {
        if field.values.len() != gt.len() {
            return Err(HeuristicError::LengthMismatch {
                psi: field.values.len(),
                gt: gt.len(),
            });
        }
        for (&p, &g) in field.values.iter().zip(gt.values()) {
            if g > 0.0 {
                psi_all.push(p);
                gt_all.push(g);
            }
        }
    }
    calibrate(&psi_all, &gt_all, n, seed)
}

/// `clamp(a·ψ + b, 0, 1)` per point.
pub fn predict(field: &PsiField, calib: &Calibration) -> ContactMap {
    let values = field
        .values
        .iter()
        .map(|&v| (calib.a * v + calib.b).clamp(0.0, 1.0))
        .collect();
    ContactMap::new(values).expect("clamped values are in [0, 1]")
}
