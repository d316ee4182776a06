//! Evaluation: rebalanced contact accuracy curves, 3D joint accuracy and hand-object
//! penetration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{class_weights, discretize, ContactError, ContactMap};
use crate::geom::{MeshIndex, TriMesh, Vec3};
use crate::handmodel::{HandProxy, JOINT_COUNT};

/// Contact-difference thresholds `0, 0.01, …, 1`.
pub const AUC_GRID: usize = 101;
/// Error thresholds for PCK run from 0 to this value (meters).
pub const PCK_MAX_THRESHOLD: f64 = 0.05;
pub const PCK_STEPS: usize = 100;
/// Proxy surface sampling spacing for penetration statistics (meters).
pub const PENETRATION_SPACING: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("expected {JOINT_COUNT} joints, got {0}")]
    JointCount(usize),
    #[error("non-finite joint {0}")]
    NonFinite(usize),
    #[error("object mesh is not watertight; inside test undefined")]
    NotWatertight,
    #[error(transparent)]
    Contact(#[from] ContactError),
}

fn trapezoid(ys: &[f64]) -> f64 {
    let steps = (ys.len() - 1) as f64;
    ys.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum::<f64>() / steps
}

/// Rebalanced accuracy as a function of the allowed contact difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub thresholds: Vec<f64>,
    pub accuracy: Vec<f64>,
    /// Percent.
    pub auc: f64,
}

impl AucReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,accuracy\n");
        for (t, a) in self.thresholds.iter().zip(&self.accuracy) {
            s.push_str(&format!("{t},{a}\n"));
        }
        s
    }
}

/// Per-point weights: inverse frequency of each ground-truth bin (λ = 0), so every
/// occupied bin contributes equally.
fn rebalance_weights(gt: &ContactMap) -> Result<Vec<f64>, MetricsError> {
    let labels = discretize(gt);
    let w = class_weights(&labels, 0.0)?;
    Ok(labels.iter().map(|&b| w[b as usize]).collect())
}

pub fn rebalanced_auc(pred: &ContactMap, gt: &ContactMap) -> Result<AucReport, MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::Empty);
    }
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt.len()));
    }
    let weights = rebalance_weights(gt)?;
    let total: f64 = weights.iter().sum();
    let diffs: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - g).abs())
        .collect();
    let thresholds: Vec<f64> = (0..AUC_GRID).map(|k| k as f64 / (AUC_GRID - 1) as f64).collect();
    let accuracy: Vec<f64> = thresholds
        .iter()
        .map(|&t| {
            let hit: f64 = diffs
                .iter()
                .zip(&weights)
                .filter(|(d, _)| **d <= t)
                .map(|(_, w)| w)
                .sum();
            (hit / total).min(1.0)
        })
        .collect();
    let auc = 100.0 * trapezoid(&accuracy);
    Ok(AucReport {
        thresholds,
        accuracy,
        auc,
    })
}

/// Mean of per-grasp rebalanced AuC values.
pub fn mean_auc(grasps: &[(ContactMap, ContactMap)]) -> Result<f64, MetricsError> {
    if grasps.is_empty() {
        return Err(MetricsError::Empty);
    }
    let aucs = grasps
        .par_iter()
        .map(|(p, g)| rebalanced_auc(p, g).map(|r| r.auc))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Rebalanced AuC over the pooled points of all grasps.
pub fn pooled_auc(grasps: &[(ContactMap, ContactMap)]) -> Result<AucReport, MetricsError> {
    let mut p = Vec::new();
    let mut g = Vec::new();
    for (a, b) in grasps {
        if a.len() != b.len() {
            return Err(MetricsError::LengthMismatch(a.len(), b.len()));
        }
        p.extend_from_slice(a.values());
        g.extend_from_slice(b.values());
    }
    rebalanced_auc(&ContactMap::new(p)?, &ContactMap::new(g)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointAccuracy {
    pub mean_error_mm: f64,
    /// Percent; area under PCK over thresholds 0..5 cm.
    pub pck_auc: f64,
}

/// Fraction of errors `≤ t` on the 101-point grid over `[0, 5 cm]`.
pub fn pck_curve(errors: &[f64]) -> Vec<f64> {
    (0..=PCK_STEPS)
        .map(|k| {
            let t = PCK_MAX_THRESHOLD * k as f64 / PCK_STEPS as f64;
            errors.iter().filter(|&&e| e <= t).count() as f64 / errors.len() as f64
        })
        .collect()
}

fn joint_errors(pred: &[Vec3], gt: &[Vec3]) -> Result<Vec<f64>, MetricsError> {
    for s in [pred, gt] {
        if s.len() != JOINT_COUNT {
            return Err(MetricsError::JointCount(s.len()));
        }
        if let Some(i) = s.iter().position(|j| !j.iter().all(|c| c.is_finite())) {
            return Err(MetricsError::NonFinite(i));
        }
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).norm()).collect())
}

pub fn joint_accuracy(pred: &[Vec3], gt: &[Vec3]) -> Result<JointAccuracy, MetricsError> {
    summarize_joint_errors(&joint_errors(pred, gt)?)
}

/// Pools the joint errors of several hands.
pub fn joint_accuracy_many(pairs: &[(&[Vec3], &[Vec3])]) -> Result<JointAccuracy, MetricsError> {
    let mut errors = Vec::new();
    for (p, g) in pairs {
        errors.extend(joint_errors(p, g)?);
    }
    summarize_joint_errors(&errors)
}

fn summarize_joint_errors(errors: &[f64]) -> Result<JointAccuracy, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(JointAccuracy {
        mean_error_mm: 1000.0 * errors.iter().sum::<f64>() / errors.len() as f64,
        pck_auc: 100.0 * trapezoid(&pck_curve(errors)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenetrationStats {
    pub mean_mm: f64,
    pub median_mm: f64,
    pub max_mm: f64,
    /// Percent of hand-surface samples inside the object.
    pub frequency: f64,
    pub samples: usize,
}

/// Deterministic samples of the union surface of the hand proxies.
pub fn proxy_surface_samples(proxies: &[HandProxy], spacing: f64) -> Vec<Vec3> {
    proxies
        .iter()
        .flat_map(|p| p.surface_points(spacing).into_iter().map(|s| s.position))
        .collect()
}

/// Depth statistics of hand-surface samples that lie inside the object.
pub fn penetration_stats(object: &TriMesh, samples: &[Vec3]) -> Result<PenetrationStats, MetricsError> {
    if !object.is_watertight() {
        return Err(MetricsError::NotWatertight);
    }
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let index = MeshIndex::new(object);
    let mut depths: Vec<f64> = samples
        .par_iter()
        .filter_map(|p| index.contains(p).then(|| index.nearest(p).distance))
        .collect();
    depths.sort_by(f64::total_cmp);
    let n = depths.len();
    let (mean, median, max) = if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let median = if n % 2 == 1 {
            depths[n / 2]
        } else {
            (depths[n / 2 - 1] + depths[n / 2]) / 2.0
        };
        (depths.iter().sum::<f64>() / n as f64, median, depths[n - 1])
    };
    Ok(PenetrationStats {
        mean_mm: 1000.0 * mean,
        median_mm: 1000.0 * median,
        max_mm: 1000.0 * max,
        frequency: 100.0 * n as f64 / samples.len() as f64,
        samples: samples.len(),
    })
}

/// JSON summary written next to evaluation curves.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_err_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pck_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penetration: Option<PenetrationStats>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{shapes, RigidTransform};
    use crate::handmodel::{rest_skeleton, Handedness, ProxyConfig};
    use proptest::prelude::*;

    fn map(v: Vec<f64>) -> ContactMap {
        ContactMap::new(v).unwrap()
    }

    fn spread(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 37) % 101) as f64 / 100.0).collect()
    }

    #[test]
    fn perfect_prediction_scores_100() {
        let g = map(spread(300));
        let r = rebalanced_auc(&g, &g).unwrap();
        assert!(r.accuracy.iter().all(|&a| (a - 1.0).abs() < 1e-12));
        assert!((r.auc - 100.0).abs() < 1e-9);
        assert_eq!(r.thresholds.len(), 101);
    }

    #[test]
    fn constant_half_offset_is_a_step_at_one_half() {
        let gt: Vec<f64> = (0..200).map(|i| 0.5 * i as f64 / 199.0).collect();
        let pred: Vec<f64> = gt.iter().map(|g| g + 0.5).collect();
        let r = rebalanced_auc(&map(pred), &map(gt)).unwrap();
        for (t, a) in r.thresholds.iter().zip(&r.accuracy) {
            if *t < 0.49 {
                assert_eq!(*a, 0.0);
            }
            if *t > 0.51 {
                assert!((a - 1.0).abs() < 1e-12);
            }
        }
        // Analytic step integral is 50%; the grid can move it by at most one step.
        assert!((r.auc - 50.0).abs() <= 1.0, "{}", r.auc);
    }

    #[test]
    fn duplicating_a_bin_leaves_auc_unchanged() {
        let gt = spread(120);
        let pred: Vec<f64> = gt.iter().enumerate().map(|(i, g)| (g + 0.03 * ((i % 7) as f64 - 3.0)).clamp(0.0, 1.0)).collect();
        let base = rebalanced_auc(&map(pred.clone()), &map(gt.clone())).unwrap().auc;
        let (mut p2, mut g2) = (pred.clone(), gt.clone());
        for (p, g) in pred.iter().zip(&gt) {
            if crate::contact::bin_of(*g) == 4 {
                p2.push(*p);
                g2.push(*g);
            }
        }
        assert!(g2.len() > gt.len());
        let dup = rebalanced_auc(&map(p2), &map(g2)).unwrap().auc;
        assert!((base - dup).abs() < 1e-9, "{base} vs {dup}");
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(rebalanced_auc(&map(vec![]), &map(vec![])), Err(MetricsError::Empty));
        assert!(matches!(rebalanced_auc(&map(vec![0.1]), &map(vec![0.1, 0.2])), Err(MetricsError::LengthMismatch(..))));
        let j = [Vec3::zeros(); 21];
        let mut bad = j;
        bad[5].x = f64::NAN;
        assert_eq!(joint_accuracy(&bad, &j), Err(MetricsError::NonFinite(5)));
        assert_eq!(joint_accuracy(&j[..20], &j[..20]), Err(MetricsError::JointCount(20)));
    }

    #[test]
    fn mean_and_pooled_modes() {
        let a = (map(vec![0.1, 0.9]), map(vec![0.1, 0.9]));
        let b = (map(vec![0.0, 0.0]), map(vec![0.6, 0.6]));
        let ra = rebalanced_auc(&a.0, &a.1).unwrap().auc;
        let rb = rebalanced_auc(&b.0, &b.1).unwrap().auc;
        let m = mean_auc(&[a.clone(), b.clone()]).unwrap();
        assert!((m - (ra + rb) / 2.0).abs() < 1e-12);
        let pooled = pooled_auc(&[a, b]).unwrap();
        assert!(pooled.auc > 0.0 && pooled.auc < 100.0);
    }

    #[test]
    fn joint_accuracy_examples() {
        let gt: Vec<Vec3> = (0..21).map(|i| Vec3::new(0.01 * i as f64, 0.0, 0.0)).collect();
        let exact = joint_accuracy(&gt, &gt).unwrap();
        assert_eq!(exact.mean_error_mm, 0.0);
        assert!((exact.pck_auc - 100.0).abs() < 1e-12);
        let far: Vec<Vec3> = gt.iter().map(|j| j + Vec3::new(0.0, 0.05, 0.0)).collect();
        let r = joint_accuracy(&far, &gt).unwrap();
        assert!((r.mean_error_mm - 50.0).abs() < 1e-9);
        assert!(r.pck_auc <= 1.0, "{}", r.pck_auc);
        let half: Vec<Vec3> = gt.iter().map(|j| j + Vec3::new(0.0, 0.0, 0.025)).collect();
        let r = joint_accuracy(&half, &gt).unwrap();
        assert!((r.pck_auc - 50.0).abs() <= 1.0, "{}", r.pck_auc);
    }

    fn rest_proxy() -> HandProxy {
        HandProxy::from_skeleton(&rest_skeleton(Handedness::Right), &ProxyConfig::default()).unwrap()
    }

    #[test]
    fn proxy_outside_object_does_not_penetrate() {
        let cube = shapes::unit_cube().transformed(&RigidTransform::from_axis_angle(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0)));
        let samples = proxy_surface_samples(&[rest_proxy()], 0.003);
        let s = penetration_stats(&cube, &samples).unwrap();
        assert_eq!((s.mean_mm, s.median_mm, s.frequency), (0.0, 0.0, 0.0));
        assert!(matches!(
            penetration_stats(&shapes::grid_square(1.0, 2), &samples),
            Err(MetricsError::NotWatertight)
        ));
    }

    #[test]
    fn fingertip_planted_three_millimeters_into_a_box() {
        let proxy = rest_proxy();
        let samples = proxy_surface_samples(&[proxy.clone()], 0.0005);
        let top = samples.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        // Large box whose lower face sits 3 mm below the highest proxy point.
        let face = top - 0.003;
        let boxm = shapes::subdivided_box(Vec3::new(1.0, 1.0, 1.0), 2)
            .transformed(&RigidTransform::from_axis_angle(Vec3::zeros(), Vec3::new(0.0, face + 0.5, 0.0)));
        let s = penetration_stats(&boxm, &samples).unwrap();
        assert!((s.max_mm - 3.0).abs() < 1e-6, "{}", s.max_mm);
        assert!(s.frequency > 0.0 && s.frequency < 5.0);
        assert!(s.mean_mm > 0.0 && s.mean_mm < 3.0);
    }

    proptest! {
        #[test]
        fn curve_properties(
            gt in prop::collection::vec(0.0f64..=1.0, 1..80),
            noise in prop::collection::vec(-1.0f64..1.0, 80),
        ) {
            let pred: Vec<f64> = gt.iter().zip(&noise).map(|(g, n)| (g + n).clamp(0.0, 1.0)).collect();
            let r = rebalanced_auc(&map(pred.clone()), &map(gt.clone())).unwrap();
            prop_assert!(r.accuracy.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((r.accuracy[100] - 1.0).abs() < 1e-12);
            prop_assert!(r.auc >= 0.0 && r.auc <= 100.0);
            let c = rebalanced_auc(
                &map(pred.iter().map(|v| 1.0 - v).collect()),
                &map(gt.iter().map(|v| 1.0 - v).collect()),
            ).unwrap();
            prop_assert!((r.auc - c.auc).abs() < 1e-6, "{} vs {}", r.auc, c.auc);
        }

        #[test]
        fn joint_error_is_rigid_invariant(
            seed in 0u64..1000,
            rx in -3.0f64..3.0, ry in -3.0f64..3.0, rz in -3.0f64..3.0,
            tx in -1.0f64..1.0, ty in -1.0f64..1.0, tz in -1.0f64..1.0,
        ) {
            let f = |i: usize, k: u64| (((i as u64 * 31 + k * 17 + seed) % 97) as f64) / 970.0;
            let gt: Vec<Vec3> = (0..21).map(|i| Vec3::new(f(i, 1), f(i, 2), f(i, 3))).collect();
            let pred: Vec<Vec3> = (0..21).map(|i| gt[i] + Vec3::new(f(i, 4), f(i, 5), f(i, 6)) * 0.1).collect();
            let t = RigidTransform::from_axis_angle(Vec3::new(rx, ry, rz), Vec3::new(tx, ty, tz));
            let a = joint_accuracy(&pred, &gt).unwrap();
            let tp: Vec<Vec3> = pred.iter().map(|p| t.apply(p)).collect();
            let tg: Vec<Vec3> = gt.iter().map(|p| t.apply(p)).collect();
            let b = joint_accuracy(&tp, &tg).unwrap();
            prop_assert!((a.mean_error_mm - b.mean_error_mm).abs() < 1e-9);
        }
    }
}
