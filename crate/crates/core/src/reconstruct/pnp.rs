//! Object pose from 2D detections of known object-frame 3D joints.

use nalgebra::{DMatrix, Matrix3, Rotation3, SMatrix, SVector, Vector2};

use crate::geom::{CameraIntrinsics, RigidTransform, Vec3};

use super::robust::{minimize, Term};
use super::triangulate::MIN_DEPTH;
use super::ReconstructError;

/// One calibrated camera observing the object: detections `[u, v, w]` index the 3D points.
#[derive(Clone, Copy, Debug)]
pub struct PnpView<'a> {
    pub intrinsics: &'a CameraIntrinsics,
    pub camera_from_world: RigidTransform,
    pub detections: &'a [[f64; 3]],
}

/// `world_from_object` minimizing the robust reprojection error in one camera.
pub fn pnp_pose(
    points: &[Vec3],
    detections: &[[f64; 3]],
    intrinsics: &CameraIntrinsics,
    camera_from_world: &RigidTransform,
    delta: f64,
) -> Result<RigidTransform, ReconstructError> {
    pnp_pose_multi(
        points,
        &[PnpView {
            intrinsics,
            camera_from_world: *camera_from_world,
            detections,
        }],
        delta,
    )
}

/// Shared `world_from_object` for several cameras seeing the same object in one frame.
pub fn pnp_pose_multi(points: &[Vec3], views: &[PnpView], delta: f64) -> Result<RigidTransform, ReconstructError> {
    for v in views {
        if v.detections.len() != points.len() {
            return Err(ReconstructError::InvalidObservation(format!(
                "{} detections for {} points",
                v.detections.len(),
                points.len()
            )));
        }
    }
    let used: Vec<usize> = (0..points.len())
        .filter(|&i| views.iter().any(|v| v.detections[i][2] > 0.0))
        .collect();
    if used.len() < 4 {
        return Err(ReconstructError::Degenerate(format!("{} usable correspondences", used.len())));
    }
    if !non_coplanar(&used.iter().map(|&i| points[i]).collect::<Vec<_>>()) {
        return Err(ReconstructError::Degenerate("points are coplanar".into()));
    }

    let mut starts = Vec::new();
    for v in views {
        if let Some(cfo) = dlt(points, v) {
            starts.push(v.camera_from_world.inverse() * cfo);
        }
    }
    if starts.is_empty() {
        let v = views
            .iter()
            .max_by_key(|v| v.detections.iter().filter(|d| d[2] > 0.0).count())
            .expect("at least one view");
        for r in octahedral_rotations() {
            if let Some(cfo) = place_rotation(points, v, r) {
                starts.push(v.camera_from_world.inverse() * cfo);
            }
        }
    }

    let mut best: Option<(f64, RigidTransform)> = None;
    for start in starts {
        if let Some((cost, pose)) = refine(points, views, start, delta) {
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, pose));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| ReconstructError::Degenerate("no pose places the points in front of the cameras".into()))
}

fn non_coplanar(points: &[Vec3]) -> bool {
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        cov += (p - c) * (p - c).transpose();
    }
    let ev = cov.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    hi > 0.0 && lo > 1e-10 * hi
}

/// Linear estimate of `camera_from_object` from one view (needs six detections).
fn dlt(points: &[Vec3], view: &PnpView) -> Option<RigidTransform> {
    let used: Vec<usize> = (0..points.len()).filter(|&i| view.detections[i][2] > 0.0).collect();
    if used.len() < 6 {
        return None;
    }
    let pts: Vec<Vec3> = used.iter().map(|&i| points[i]).collect();
    if !non_coplanar(&pts) {
        return None;
    }
    // Center and scale the 3D points for conditioning.
    let c = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let s = (pts.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / pts.len() as f64).sqrt();
    let mut a = DMatrix::<f64>::zeros(2 * used.len(), 12);
    for (r, &i) in used.iter().enumerate() {
        let x = (points[i] - c) / s;
        let n = view
            .intrinsics
            .normalize(&Vector2::new(view.detections[i][0], view.detections[i][1]));
        let h = [x.x, x.y, x.z, 1.0];
        for k in 0..4 {
            a[(2 * r, k)] = h[k];
            a[(2 * r, 8 + k)] = -n.x * h[k];
            a[(2 * r + 1, 4 + k)] = h[k];
            a[(2 * r + 1, 8 + k)] = -n.y * h[k];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let p = v_t.row(svd.singular_values.imin());
    let mut m = Matrix3::from_fn(|r, k| p[4 * r + k]);
    let mut t = Vec3::new(p[3], p[7], p[11]);
    if m.determinant() < 0.0 {
        m = -m;
        t = -t;
    }
    let msvd = m.svd(true, true);
    let r = msvd.u? * msvd.v_t?;
    let scale = msvd.singular_values.sum() / 3.0;
    if !(scale > 0.0) {
        return None;
    }
    let lambda = scale / s;
    let rot = Rotation3::from_matrix_unchecked(r);
    let t = t / lambda - rot * c;
    let pose = RigidTransform::from_parts(rot, t);
    pts.iter().all(|p| pose.apply(p).z > MIN_DEPTH).then_some(pose)
}

/// The 24 proper rotations mapping coordinate axes to coordinate axes.
fn octahedral_rotations() -> Vec<Rotation3<f64>> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for p in perms {
        for signs in 0..8 {
            let m = Matrix3::from_fn(|r, c| {
                if p[r] == c {
                    if signs >> r & 1 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                } else {
                    0.0
                }
            });
            if m.determinant() > 0.0 {
                out.push(Rotation3::from_matrix_unchecked(m));
            }
        }
    }
    out
}

/// Places the rotated point set along the ray of its mean detection, at the depth
/// that matches the observed image spread.
fn place_rotation(points: &[Vec3], view: &PnpView, r: Rotation3<f64>) -> Option<RigidTransform> {
    let used: Vec<usize> = (0..points.len()).filter(|&i| view.detections[i][2] > 0.0).collect();
    let norm: Vec<Vector2<f64>> = used
        .iter()
        .map(|&i| {
            view.intrinsics
                .normalize(&Vector2::new(view.detections[i][0], view.detections[i][1]))
        })
        .collect();
    let c2 = norm.iter().sum::<Vector2<f64>>() / norm.len() as f64;
    let c3 = used.iter().map(|&i| points[i]).sum::<Vec3>() / used.len() as f64;
    let spread2 = norm.iter().map(|n| (n - c2).norm()).sum::<f64>() / norm.len() as f64;
    let spread3 = used.iter().map(|&i| (points[i] - c3).norm()).sum::<f64>() / used.len() as f64;
    if !(spread2 > 0.0) {
        return None;
    }
    let depth = spread3 / spread2;
    let t = Vec3::new(c2.x, c2.y, 1.0) * depth - r * c3;
    Some(RigidTransform::from_parts(r, t))
}

fn refine(points: &[Vec3], views: &[PnpView], start: RigidTransform, delta: f64) -> Option<(f64, RigidTransform)> {
    let pose_at = |x: &SVector<f64, 6>| start * RigidTransform::from_axis_angle(Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]));
    let errors = |x: &SVector<f64, 6>| -> Option<Vec<(Vector2<f64>, f64)>> {
        let pose = pose_at(x);
        let mut out = Vec::new();
        for v in views {
            let cfo = v.camera_from_world * pose;
            for (p, d) in points.iter().zip(v.detections) {
                if d[2] <= 0.0 {
                    continue;
                }
                let pc = cfo.apply(p);
                if pc.z <= MIN_DEPTH {
                    return None;
                }
                let k = v.intrinsics;
                let proj = Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy);
                out.push((proj - Vector2::new(d[0], d[1]), d[2].sqrt()));
            }
        }
        Some(out)
    };
    let eval = |x: &SVector<f64, 6>| -> Option<Vec<Term<6>>> {
        let base = errors(x)?;
        let mut jac = vec![SMatrix::<f64, 2, 6>::zeros(); base.len()];
        for c in 0..6 {
            let h = 1e-7;
            let mut xp = *x;
            let mut xm = *x;
            xp[c] += h;
            xm[c] -= h;
            let (ep, em) = (errors(&xp)?, errors(&xm)?);
            for (k, jk) in jac.iter_mut().enumerate() {
                jk.set_column(c, &((ep[k].0 - em[k].0) / (2.0 * h)));
            }
        }
        Some(
            base.into_iter()
                .zip(jac)
                .map(|((e, scale), jac)| Term { e, scale, jac })
                .collect(),
        )
    };
    let solved = minimize(SVector::<f64, 6>::zeros(), eval, delta, 200, 1e-12)?;
    Some((solved.cost, pose_at(&solved.x)))
}
