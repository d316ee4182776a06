use nalgebra::{DMatrix, Matrix2x3, SMatrix, SVector, Vector2};
use rayon::prelude::*;

use crate::geom::{CameraIntrinsics, RigidTransform, Vec3};
use crate::handmodel::{Handedness, JOINT_COUNT};

use super::observation::{Detection2D, GraspObservation, PairId};
use super::ransac::ReconstructConfig;
use super::robust::{huber, minimize, Term};
use super::ReconstructError;

/// Minimum camera-frame depth for a point to count as in front of the camera.
pub(crate) const MIN_DEPTH: f64 = 1e-9;

/// Per-joint robust residuals of one detection, and joints that fell behind the camera.
#[derive(Clone, Debug, PartialEq)]
pub struct JointResiduals {
    pub values: [f64; JOINT_COUNT],
    pub behind: Vec<usize>,
}

impl JointResiduals {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// `huber(||x_j − π(X_j)|| · √w_j)` per joint; zero-confidence joints contribute 0.
pub fn residual(
    joints: &[Vec3; JOINT_COUNT],
    detection: &Detection2D,
    intrinsics: &CameraIntrinsics,
    camera_from_object: &RigidTransform,
    delta: f64,
) -> JointResiduals {
    let mut values = [0.0; JOINT_COUNT];
    let mut behind = Vec::new();
    for j in 0..JOINT_COUNT {
        let w = detection.confidence(j);
        if w <= 0.0 {
            continue;
        }
        match project_point(intrinsics, camera_from_object, &joints[j]) {
            Some(p) => values[j] = huber((p - detection.pixel(j)).norm() * w.sqrt(), delta),
            None => behind.push(j),
        }
    }
    JointResiduals { values, behind }
}

#[inline]
pub(crate) fn project_point(k: &CameraIntrinsics, camera_from_object: &RigidTransform, x: &Vec3) -> Option<Vector2<f64>> {
    let pc = camera_from_object.apply(x);
    if pc.z <= MIN_DEPTH {
        return None;
    }
    Some(Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy))
}

/// Projection and its Jacobian with respect to the object-frame point.
#[inline]
fn project_with_jacobian(
    k: &CameraIntrinsics,
    camera_from_object: &RigidTransform,
    x: &Vec3,
) -> Option<(Vector2<f64>, Matrix2x3<f64>)> {
    let pc = camera_from_object.apply(x);
    if pc.z <= MIN_DEPTH {
        return None;
    }
    let iz = 1.0 / pc.z;
    let d = Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * pc.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * pc.y * iz * iz,
    );
    let p = Vector2::new(k.fx * pc.x * iz + k.cx, k.fy * pc.y * iz + k.cy);
    Some((p, d * camera_from_object.rotation().matrix()))
}

/// A frame-camera pair resolved against the observation.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub id: PairId,
    pub intrinsics: &'a CameraIntrinsics,
    pub camera_from_object: RigidTransform,
    pub center: Vec3,
    pub detection: &'a Detection2D,
}

impl<'a> View<'a> {
    pub fn new(obs: &'a GraspObservation, detection: &'a Detection2D, camera_from_object: RigidTransform) -> Self {
        Self {
            id: PairId {
                frame: detection.frame,
                camera: detection.camera,
            },
            intrinsics: &obs.cameras[detection.camera].intrinsics,
            camera_from_object,
            center: camera_from_object.inverse().translation().to_owned(),
            detection,
        }
    }

    /// Mean reprojection error (pixels) over detected joints in front of the camera.
    pub fn mean_error(&self, joints: &[Vec3; JOINT_COUNT]) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (j, x) in joints.iter().enumerate() {
            if self.detection.confidence(j) <= 0.0 {
                continue;
            }
            let p = project_point(self.intrinsics, &self.camera_from_object, x)?;
            sum += (p - self.detection.pixel(j)).norm();
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }
}

pub(crate) fn views<'a>(
    obs: &'a GraspObservation,
    hand: Handedness,
    subset: &[PairId],
) -> Result<Vec<View<'a>>, ReconstructError> {
    subset
        .iter()
        .map(|id| {
            let det = obs
                .detections
                .iter()
                .find(|d| d.hand == hand && d.frame == id.frame && d.camera == id.camera)
                .ok_or_else(|| {
                    ReconstructError::InvalidObservation(format!(
                        "no detection for frame {} camera {}",
                        id.frame, id.camera
                    ))
                })?;
            Ok(View::new(obs, det, obs.camera_from_object(id.frame, id.camera)))
        })
        .collect()
}

/// Per-joint triangulation; `None` marks joints without two usable views.
#[derive(Clone, Debug, PartialEq)]
pub struct Triangulation {
    pub joints: [Option<Vec3>; JOINT_COUNT],
}

impl Triangulation {
    pub fn complete(&self) -> Result<[Vec3; JOINT_COUNT], ReconstructError> {
        let missing: Vec<usize> = (0..JOINT_COUNT).filter(|&j| self.joints[j].is_none()).collect();
        if !missing.is_empty() {
            return Err(ReconstructError::Uninitialized { joints: missing });
        }
        Ok(self.joints.map(|j| j.expect("checked above")))
    }
}

/// Homogeneous DLT per joint in normalized image coordinates, over the views of `subset`
/// with positive confidence for that joint.
pub fn triangulate_init(
    obs: &GraspObservation,
    hand: Handedness,
    subset: &[PairId],
    config: &ReconstructConfig,
) -> Result<Triangulation, ReconstructError> {
    let views = views(obs, hand, subset)?;
    Ok(triangulate_views(&views, config.min_ray_angle_deg.to_radians()))
}

pub(crate) fn triangulate_views(views: &[View], min_angle: f64) -> Triangulation {
    Triangulation {
        joints: std::array::from_fn(|j| triangulate_joint(views, j, min_angle)),
    }
}

fn triangulate_joint(views: &[View], j: usize, min_angle: f64) -> Option<Vec3> {
    let used: Vec<&View> = views.iter().filter(|v| v.detection.confidence(j) > 0.0).collect();
    if used.len() < 2 {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(2 * used.len(), 4);
    for (r, v) in used.iter().enumerate() {
        let n = v.intrinsics.normalize(&v.detection.pixel(j));
        let m = v.camera_from_object.to_matrix4();
        for c in 0..4 {
            a[(2 * r, c)] = n.x * m[(2, c)] - m[(0, c)];
            a[(2 * r + 1, c)] = n.y * m[(2, c)] - m[(1, c)];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let k = svd.singular_values.imin();
    let h = v_t.row(k);
    if h[3].abs() < 1e-12 * h.norm() {
        return None;
    }
    let x = Vec3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    if !x.iter().all(|c| c.is_finite()) {
        return None;
    }
    if used.iter().any(|v| v.camera_from_object.apply(&x).z <= MIN_DEPTH) {
        return None;
    }
    let rays: Vec<Vec3> = used.iter().map(|v| (x - v.center).normalize()).collect();
    let mut widest: f64 = 0.0;
    for (i, a) in rays.iter().enumerate() {
        for b in &rays[i + 1..] {
            widest = widest.max(a.cross(b).norm().atan2(a.dot(b)));
        }
    }
    (widest >= min_angle).then_some(x)
}

/// Result of [`optimize_joints`]: each joint is an independent robust problem.
#[derive(Clone, Debug, PartialEq)]
pub struct JointOptimization {
    pub joints: [Vec3; JOINT_COUNT],
    pub cost: f64,
    /// Per-joint cost at the start and after every accepted step.
    pub traces: Vec<Vec<f64>>,
}

/// Minimizes the summed robust reprojection cost over the given pairs, starting at `init`.
pub fn optimize_joints(
    init: &[Vec3; JOINT_COUNT],
    obs: &GraspObservation,
    hand: Handedness,
    inliers: &[PairId],
    config: &ReconstructConfig,
) -> Result<JointOptimization, ReconstructError> {
    if init.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
        return Err(ReconstructError::InvalidObservation("non-finite initial joints".into()));
    }
    let views = views(obs, hand, inliers)?;
    optimize_views(init, &views, config)
}

pub(crate) fn optimize_views(
    init: &[Vec3; JOINT_COUNT],
    views: &[View],
    config: &ReconstructConfig,
) -> Result<JointOptimization, ReconstructError> {
    if views
        .iter()
        .all(|v| (0..JOINT_COUNT).all(|j| v.detection.confidence(j) <= 0.0))
    {
        return Err(ReconstructError::NoConfidence);
    }
    let solved: Vec<(Vec3, f64, Vec<f64>)> = (0..JOINT_COUNT)
        .into_par_iter()
        .map(|j| optimize_joint(&init[j], views, j, config))
        .collect();
    let joints = std::array::from_fn(|j| solved[j].0);
    let cost = solved.iter().map(|s| s.1).sum();
    let traces = solved.into_iter().map(|s| s.2).collect();
    Ok(JointOptimization { joints, cost, traces })
}

fn optimize_joint(init: &Vec3, views: &[View], j: usize, config: &ReconstructConfig) -> (Vec3, f64, Vec<f64>) {
    // Observations behind a camera at the start are dropped for the whole solve.
    let used: Vec<&View> = views
        .iter()
        .filter(|v| v.detection.confidence(j) > 0.0 && v.camera_from_object.apply(init).z > MIN_DEPTH)
        .collect();
    if used.is_empty() {
        return (*init, 0.0, vec![0.0]);
    }
    let eval = |x: &SVector<f64, 3>| -> Option<Vec<Term<3>>> {
        let p = Vec3::new(x[0], x[1], x[2]);
        used.iter()
            .map(|v| {
                let (proj, jac) = project_with_jacobian(v.intrinsics, &v.camera_from_object, &p)?;
                Some(Term {
                    e: proj - v.detection.pixel(j),
                    scale: v.detection.confidence(j).sqrt(),
                    jac: SMatrix::<f64, 2, 3>::from(jac),
                })
            })
            .collect()
    };
    let x0 = SVector::<f64, 3>::new(init.x, init.y, init.z);
    match minimize(x0, eval, config.huber_delta, config.max_lm_iterations, config.lm_rel_tol) {
        Some(s) => (Vec3::new(s.x[0], s.x[1], s.x[2]), s.cost, s.trace),
        None => (*init, f64::INFINITY, vec![f64::INFINITY]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::fixture::{scenario, ScenarioSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn all_pairs(obs: &GraspObservation) -> Vec<PairId> {
        obs.detections
            .iter()
            .map(|d| PairId {
                frame: d.frame,
                camera: d.camera,
            })
            .collect()
    }

    #[test]
    fn exact_projection_has_zero_residual() {
        let s = scenario(&ScenarioSpec::default(), 1);
        let d = &s.obs.detections[0];
        let cfo = s.obs.camera_from_object(d.frame, d.camera);
        let r = residual(&s.joints, d, &s.obs.cameras[d.camera].intrinsics, &cfo, 5.0);
        assert!(r.total() < 1e-18);
        assert!(r.behind.is_empty());
    }

    #[test]
    fn residual_regimes() {
        let s = scenario(&ScenarioSpec::default(), 2);
        let mut d = s.obs.detections[0].clone();
        let cfo = s.obs.camera_from_object(d.frame, d.camera);
        let k = s.obs.cameras[d.camera].intrinsics;
        for j in &mut d.joints {
            j[2] = 1.0;
        }
        d.joints[4][0] += 3.0;
        let r = residual(&s.joints, &d, &k, &cfo, 5.0);
        assert!((r.values[4] - 4.5).abs() < 1e-9);
        d.joints[4][0] += 47.0;
        let r = residual(&s.joints, &d, &k, &cfo, 5.0);
        assert!((r.values[4] - 5.0 * (50.0 - 2.5)).abs() < 1e-9);
        assert!(r.values[5].abs() < 1e-18);
    }

    #[test]
    fn two_camera_triangulation_is_exact() {
        let spec = ScenarioSpec {
            cameras: 2,
            frames: 2,
            ..ScenarioSpec::default()
        };
        let s = scenario(&spec, 3);
        let pairs: Vec<PairId> = all_pairs(&s.obs).into_iter().filter(|p| p.frame == 0).collect();
        let t = triangulate_init(&s.obs, Handedness::Right, &pairs, &ReconstructConfig::default()).unwrap();
        let got = t.complete().unwrap();
        for j in 0..JOINT_COUNT {
            assert!((got[j] - s.joints[j]).norm() < 1e-6);
        }
    }

    #[test]
    fn zero_baseline_is_uninitialized() {
        let s = scenario(&ScenarioSpec::default(), 4);
        let mut obs = s.obs.clone();
        obs.cameras[1] = obs.cameras[0].clone();
        let mut d = obs.detections.iter().find(|d| d.frame == 0 && d.camera == 0).unwrap().clone();
        d.camera = 1;
        obs.detections.retain(|x| !(x.frame == 0 && x.camera == 1));
        obs.detections.push(d);
        let pairs = [PairId { frame: 0, camera: 0 }, PairId { frame: 0, camera: 1 }];
        let t = triangulate_init(&obs, Handedness::Right, &pairs, &ReconstructConfig::default()).unwrap();
        match t.complete() {
            Err(ReconstructError::Uninitialized { joints }) => assert_eq!(joints.len(), JOINT_COUNT),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn masked_view_is_skipped() {
        let spec = ScenarioSpec {
            cameras: 3,
            frames: 2,
            ..ScenarioSpec::default()
        };
        let s = scenario(&spec, 5);
        let mut obs = s.obs.clone();
        for d in obs.detections.iter_mut().filter(|d| d.camera == 2) {
            d.joints[5] = [1e4, -1e4, 0.0];
        }
        let pairs: Vec<PairId> = all_pairs(&obs).into_iter().filter(|p| p.frame == 0).collect();
        let t = triangulate_init(&obs, Handedness::Right, &pairs, &ReconstructConfig::default()).unwrap();
        assert!((t.joints[5].unwrap() - s.joints[5]).norm() < 1e-6);
        let only_two = [PairId { frame: 0, camera: 0 }, PairId { frame: 0, camera: 2 }];
        let t = triangulate_init(&obs, Handedness::Right, &only_two, &ReconstructConfig::default()).unwrap();
        assert!(t.joints[5].is_none());
        assert!(t.joints[6].is_some());
    }

    #[test]
    fn optimization_recovers_from_perturbed_init() {
        let s = scenario(&ScenarioSpec::default(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = Normal::new(0.0, 0.005 / 3f64.sqrt()).unwrap();
        let init = s.joints.map(|x| x + Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)));
        let pairs = all_pairs(&s.obs);
        let out = optimize_joints(&init, &s.obs, Handedness::Right, &pairs, &ReconstructConfig::default()).unwrap();
        for j in 0..JOINT_COUNT {
            assert!((out.joints[j] - s.joints[j]).norm() < 1e-6);
        }
        for t in &out.traces {
            assert!(t.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn optimization_at_truth_is_a_no_op() {
        let s = scenario(&ScenarioSpec::default(), 7);
        let pairs = all_pairs(&s.obs);
        let out = optimize_joints(&s.joints, &s.obs, Handedness::Right, &pairs, &ReconstructConfig::default()).unwrap();
        for j in 0..JOINT_COUNT {
            assert!((out.joints[j] - s.joints[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn all_zero_confidence_is_an_error() {
        let mut s = scenario(&ScenarioSpec::default(), 8);
        for d in &mut s.obs.detections {
            for j in &mut d.joints {
                j[2] = 0.0;
            }
        }
        let pairs = all_pairs(&s.obs);
        assert!(matches!(
            optimize_joints(&s.joints, &s.obs, Handedness::Right, &pairs, &ReconstructConfig::default()),
            Err(ReconstructError::NoConfidence)
        ));
    }

    #[test]
    fn many_views_beat_depth_lifting() {
        let spec = ScenarioSpec {
            cameras: 3,
            frames: 50,
            pixel_noise: 2.0,
            ..ScenarioSpec::default()
        };
        let s = scenario(&spec, 9);
        let pairs = all_pairs(&s.obs);
        let init = triangulate_init(&s.obs, Handedness::Right, &pairs, &ReconstructConfig::default())
            .unwrap()
            .complete()
            .unwrap();
        let out = optimize_joints(&init, &s.obs, Handedness::Right, &pairs, &ReconstructConfig::default()).unwrap();
        let err: f64 = (0..JOINT_COUNT).map(|j| (out.joints[j] - s.joints[j]).norm()).sum::<f64>() / 21.0;
        // Oracle: lift one noisy detection with its true depth.
        let d = &s.obs.detections[0];
        let cfo = s.obs.camera_from_object(d.frame, d.camera);
        let k = &s.obs.cameras[d.camera].intrinsics;
        let lifted: f64 = (0..JOINT_COUNT)
            .map(|j| {
                let depth = cfo.apply(&s.joints[j]).z;
                let x = crate::geom::backproject(&d.pixel(j), depth, k, &cfo).unwrap();
                (x - s.joints[j]).norm()
            })
            .sum::<f64>()
            / 21.0;
        assert!(err < lifted, "{err} vs {lifted}");
    }
}
