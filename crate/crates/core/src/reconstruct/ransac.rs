use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{RigidTransform, Vec3};
use crate::handmodel::{Handedness, JOINT_COUNT};

use super::observation::{GraspObservation, PairId};
use super::pnp::{pnp_pose_multi, PnpView};
use super::triangulate::{optimize_views, triangulate_views, View};
use super::{ReconstructError, DEFAULT_HUBER_DELTA, DEFAULT_INLIER_PX, DEFAULT_RANSAC_ITERATIONS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    pub huber_delta: f64,
    pub inlier_px: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Smallest angle between two viewing rays for a joint to count as triangulable.
    pub min_ray_angle_deg: f64,
    pub max_lm_iterations: usize,
    pub lm_rel_tol: f64,
    pub rescue: bool,
    /// Re-optimize the joints with rescued pairs included.
    pub refine_after_rescue: bool,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            huber_delta: DEFAULT_HUBER_DELTA,
            inlier_px: DEFAULT_INLIER_PX,
            iterations: DEFAULT_RANSAC_ITERATIONS,
            seed: 0,
            min_ray_angle_deg: 2.0,
            max_lm_iterations: 200,
            lm_rel_tol: 1e-10,
            rescue: true,
            refine_after_rescue: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub frame: usize,
    pub camera: usize,
    /// Mean reprojection error over detected joints, pixels.
    pub error: f64,
}

impl PairError {
    pub fn id(&self) -> PairId {
        PairId {
            frame: self.frame,
            camera: self.camera,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescuedFrame {
    pub frame: usize,
    /// Re-estimated `world_from_object`.
    pub pose: RigidTransform,
    pub pairs: Vec<PairError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub hand: Handedness,
    /// Object-frame joints, meters.
    pub joints: [Vec3; JOINT_COUNT],
    /// First-pass inliers, sorted by frame then camera.
    pub inliers: Vec<PairError>,
    pub rescued: Vec<RescuedFrame>,
}

impl ReconstructionResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.len() + self.rescued.iter().map(|r| r.pairs.len()).sum::<usize>()
    }

    pub fn is_inlier_frame(&self, frame: usize) -> bool {
        self.inliers.iter().any(|p| p.frame == frame) || self.rescued.iter().any(|r| r.frame == frame)
    }
}

/// Order-independent key of a pair's content, so that sampling does not depend on how
/// frames or cameras are numbered.
fn content_key(view: &View) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: f64| {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    let m = view.camera_from_object.to_matrix4();
    for v in m.iter() {
        feed(*v);
    }
    for j in &view.detection.joints {
        j.iter().for_each(|&x| feed(x));
    }
    let k = view.intrinsics;
    [k.fx, k.fy, k.cx, k.cy].into_iter().for_each(&mut feed);
    h
}

fn sorted_views<'a>(obs: &'a GraspObservation, hand: Handedness) -> Vec<View<'a>> {
    let mut views: Vec<(u64, View)> = obs
        .detections
        .iter()
        .filter(|d| d.hand == hand && obs.frames[d.frame].valid)
        .map(|d| {
            let v = View::new(obs, d, obs.camera_from_object(d.frame, d.camera));
            (content_key(&v), v)
        })
        .collect();
    views.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    views.into_iter().map(|(_, v)| v).collect()
}

struct Hypothesis {
    count: usize,
    mean_error: f64,
    joints: [Vec3; JOINT_COUNT],
}

fn inlier_views<'a>(views: &[View<'a>], joints: &[Vec3; JOINT_COUNT], threshold: f64) -> Vec<(View<'a>, f64)> {
    views
        .iter()
        .filter_map(|v| v.mean_error(joints).filter(|e| *e <= threshold).map(|e| (*v, e)))
        .collect()
}

fn distinct_frames(pairs: &[(View, f64)]) -> usize {
    let mut frames: Vec<usize> = pairs.iter().map(|(v, _)| v.id.frame).collect();
    frames.sort();
    frames.dedup();
    frames.len()
}

/// RANSAC over frame-camera pairs with 2-pair minimal samples, followed by robust refinement
/// on the inliers and, if configured, the second-pass rescue.
pub fn ransac_reconstruct(
    obs: &GraspObservation,
    hand: Handedness,
    config: &ReconstructConfig,
) -> Result<ReconstructionResult, ReconstructError> {
    obs.validate()?;
    let views = sorted_views(obs, hand);
    let n = views.len();
    if n < 2 {
        return Err(ReconstructError::ReconstructionFailed { best_inliers: 0 });
    }
    let min_angle = config.min_ray_angle_deg.to_radians();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples: Vec<(usize, usize)> = (0..config.iterations)
        .map(|_| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        })
        .collect();
    let hypotheses: Vec<Option<Hypothesis>> = samples
        .par_iter()
        .map(|&(a, b)| {
            let joints = triangulate_views(&[views[a], views[b]], min_angle).complete().ok()?;
            let inl = inlier_views(&views, &joints, config.inlier_px);
            let count = inl.len();
            let mean_error = inl.iter().map(|(_, e)| e).sum::<f64>() / count.max(1) as f64;
            Some(Hypothesis {
                count,
                mean_error,
                joints,
            })
        })
        .collect();
    // Sequential reduction keeps the choice independent of thread scheduling.
    let mut best: Option<&Hypothesis> = None;
    for h in hypotheses.iter().flatten() {
        let better = match best {
            None => true,
            Some(b) => h.count > b.count || (h.count == b.count && h.mean_error < b.mean_error),
        };
        if better {
            best = Some(h);
        }
    }
    let Some(best) = best else {
        return Err(ReconstructError::ReconstructionFailed { best_inliers: 0 });
    };
    if best.count < 3 {
        return Err(ReconstructError::ReconstructionFailed {
            best_inliers: best.count,
        });
    }

    let mut joints = best.joints;
    let mut inliers = inlier_views(&views, &joints, config.inlier_px);
    for _ in 0..5 {
        let used: Vec<View> = inliers.iter().map(|(v, _)| *v).collect();
        joints = optimize_views(&joints, &used, config)?.joints;
        let next = inlier_views(&views, &joints, config.inlier_px);
        let same = next.len() == inliers.len() && next.iter().zip(&inliers).all(|(a, b)| a.0.id == b.0.id);
        inliers = next;
        if same {
            break;
        }
    }
    if inliers.len() < 3 || distinct_frames(&inliers) < 2 {
        return Err(ReconstructError::ReconstructionFailed {
            best_inliers: inliers.len(),
        });
    }
    let mut pairs: Vec<PairError> = inliers
        .iter()
        .map(|(v, e)| PairError {
            frame: v.id.frame,
            camera: v.id.camera,
            error: *e,
        })
        .collect();
    pairs.sort_by_key(|p| p.id());
    let result = ReconstructionResult {
        hand,
        joints,
        inliers: pairs,
        rescued: Vec::new(),
    };
    if config.rescue {
        second_pass_rescue(&result, obs, config)
    } else {
        Ok(result)
    }
}

/// Re-estimates the object pose of each frame without inlier pairs from its detections and
/// the fitted joints; pairs that then pass the inlier test are added as rescued.
pub fn second_pass_rescue(
    result: &ReconstructionResult,
    obs: &GraspObservation,
    config: &ReconstructConfig,
) -> Result<ReconstructionResult, ReconstructError> {
    let hand = result.hand;
    let mut failed: Vec<usize> = obs
        .detections
        .iter()
        .filter(|d| d.hand == hand && !result.is_inlier_frame(d.frame))
        .map(|d| d.frame)
        .collect();
    failed.sort();
    failed.dedup();

    let joints = result.joints;
    let rescued: Vec<RescuedFrame> = failed
        .par_iter()
        .filter_map(|&frame| {
            let dets: Vec<_> = obs
                .detections
                .iter()
                .filter(|d| d.hand == hand && d.frame == frame)
                .collect();
            let pnp_views: Vec<PnpView> = dets
                .iter()
                .map(|d| PnpView {
                    intrinsics: &obs.cameras[d.camera].intrinsics,
                    camera_from_world: obs.cameras[d.camera].extrinsic,
                    detections: &d.joints,
                })
                .collect();
            let pose = pnp_pose_multi(&joints, &pnp_views, config.huber_delta).ok()?;
            let pairs: Vec<PairError> = dets
                .iter()
                .filter_map(|d| {
                    let v = View::new(obs, d, obs.cameras[d.camera].extrinsic * pose);
                    let e = v.mean_error(&joints)?;
                    (e <= config.inlier_px).then_some(PairError {
                        frame,
                        camera: d.camera,
                        error: e,
                    })
                })
                .collect();
            (!pairs.is_empty()).then_some(RescuedFrame { frame, pose, pairs })
        })
        .collect();

    let mut out = ReconstructionResult {
        hand,
        joints,
        inliers: result.inliers.clone(),
        rescued: result.rescued.iter().cloned().chain(rescued).collect(),
    };
    out.rescued.sort_by_key(|r| r.frame);
    if config.refine_after_rescue && !out.rescued.is_empty() {
        let mut views: Vec<View> = Vec::new();
        let find = |p: &PairError| {
            obs.detections
                .iter()
                .find(|d| d.hand == hand && d.frame == p.frame && d.camera == p.camera)
                .expect("pair comes from a detection")
        };
        for p in &out.inliers {
            views.push(View::new(obs, find(p), obs.camera_from_object(p.frame, p.camera)));
        }
        for r in &out.rescued {
            for p in &r.pairs {
                views.push(View::new(obs, find(p), obs.cameras[p.camera].extrinsic * r.pose));
            }
        }
        out.joints = optimize_views(&out.joints, &views, config)?.joints;
    }
    Ok(out)
}

/// Reconstructs every hand present in the detections independently.
pub fn reconstruct_all(
    obs: &GraspObservation,
    config: &ReconstructConfig,
) -> Result<Vec<ReconstructionResult>, ReconstructError> {
    obs.hands()
        .into_iter()
        .map(|h| ransac_reconstruct(obs, h, config))
        .collect()
}
