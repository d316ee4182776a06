use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::geom::{look_at, project, CameraIntrinsics, RigidTransform, Vec3};
use crate::handmodel::HandSkeleton;
use crate::reconstruct::{Camera, Detection2D, FrameInfo, GraspObservation};

use super::{sub_seed, SynthError, SynthScenario, BAD_DETECTION_SIGMA};

/// Cameras evenly spaced on a horizontal ring, all looking at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSpec {
    pub cameras: usize,
    /// Horizontal distance from the origin (meters).
    pub distance: f64,
    /// Camera height above the origin (meters).
    pub elevation: f64,
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            cameras: 3,
            distance: 1.0,
            elevation: 0.4,
            focal: 1000.0,
            width: 1920,
            height: 1080,
        }
    }
}

impl RigSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.distance > 0.0 && self.elevation.is_finite()) {
            return Err(SynthError::InvalidScenario("camera distance must be positive".into()));
        }
        self.intrinsics().map(|_| ())
    }

    fn intrinsics(&self) -> Result<CameraIntrinsics, SynthError> {
        CameraIntrinsics::new(
            self.focal,
            self.focal,
            self.width as f64 / 2.0,
            self.height as f64 / 2.0,
            self.width,
            self.height,
        )
        .map_err(|e| SynthError::InvalidScenario(e.to_string()))
    }

    pub fn build(&self) -> Result<Vec<Camera>, SynthError> {
        let intrinsics = self.intrinsics()?;
        (0..self.cameras)
            .map(|c| {
                let phi = std::f64::consts::TAU * c as f64 / self.cameras as f64 + 0.3;
                let eye = Vec3::new(self.distance * phi.cos(), self.distance * phi.sin(), self.elevation);
                let extrinsic = look_at(&eye, &Vec3::zeros(), &Vec3::z()).map_err(|e| SynthError::InvalidScenario(e.to_string()))?;
                Ok(Camera { intrinsics, extrinsic })
            })
            .collect()
    }
}

/// `exp(-|n|² / 2σ²)` of the realized pixel noise `n`, clipped to `[0.1, 1]`. With
/// `σ = 0` any non-zero noise gets the floor.
pub fn detection_confidence(noise: [f64; 2], sigma: f64) -> f64 {
    let n2 = noise[0] * noise[0] + noise[1] * noise[1];
    if n2 == 0.0 {
        return 1.0;
    }
    if sigma == 0.0 {
        return 0.1;
    }
    (-n2 / (2.0 * sigma * sigma)).exp().clamp(0.1, 1.0)
}

fn random_rotation(rng: &mut ChaCha8Rng, min_angle: f64, max_angle: f64) -> RigidTransform {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(min_angle..=max_angle);
    RigidTransform::from_axis_angle(Vec3::from(axis) * angle, Vec3::zeros())
}

pub(super) struct Observed {
    pub observation: GraspObservation,
    pub true_poses: Vec<RigidTransform>,
    pub corrupted_poses: Vec<usize>,
    pub corrupted_detections: Vec<usize>,
}

pub(super) fn observe(scenario: &SynthScenario, skeletons: &[HandSkeleton]) -> Observed {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(scenario.seed, 1));
    let cameras = scenario.rig.build().expect("validated rig");
    let noise = &scenario.noise;
    let frames = scenario.frames;

    let n_pose = (noise.corrupted_pose_fraction * frames as f64).round() as usize;
    let n_det = (noise.corrupted_detection_fraction * frames as f64).round() as usize;
    let mut order: Vec<usize> = (0..frames).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut corrupted_poses = order[..n_pose].to_vec();
    let mut corrupted_detections = order[n_pose..(n_pose + n_det).min(frames)].to_vec();
    corrupted_poses.sort_unstable();
    corrupted_detections.sort_unstable();

    let clean = (noise.pixel_sigma > 0.0).then(|| Normal::new(0.0, noise.pixel_sigma).unwrap());
    let bad = Normal::new(0.0, BAD_DETECTION_SIGMA).unwrap();
    let mut frame_info = Vec::with_capacity(frames);
    let mut true_poses = Vec::with_capacity(frames);
    let mut detections = Vec::new();
    for f in 0..frames {
        let t = Vec3::from_fn(|_, _| rng.random_range(-0.05..0.05));
        let pose = RigidTransform::from_translation(t) * random_rotation(&mut rng, 0.0, std::f64::consts::PI);
        true_poses.push(pose);
        let reported = if corrupted_poses.binary_search(&f).is_ok() {
            pose * random_rotation(&mut rng, 20f64.to_radians(), std::f64::consts::PI)
        } else {
            pose
        };
        frame_info.push(FrameInfo {
            pose: reported,
            valid: true,
        });
        let bad_frame = corrupted_detections.binary_search(&f).is_ok();
        for (c, cam) in cameras.iter().enumerate() {
            let camera_from_object = cam.extrinsic * pose;
            for sk in skeletons {
                let joints = sk
                    .joints()
                    .iter()
                    .map(|x| {
                        let p = project(x, &cam.intrinsics, &camera_from_object).expect("object in front of the rig");
                        let n = match (bad_frame, &clean) {
                            (true, _) => [bad.sample(&mut rng), bad.sample(&mut rng)],
                            (false, Some(d)) => [d.sample(&mut rng), d.sample(&mut rng)],
                            (false, None) => [0.0, 0.0],
                        };
                        let dropped = noise.dropout_rate > 0.0 && rng.random::<f64>() < noise.dropout_rate;
                        let w = if dropped { 0.0 } else { detection_confidence(n, noise.pixel_sigma) };
                        [p.x + n[0], p.y + n[1], w]
                    })
                    .collect();
                detections.push(Detection2D {
                    frame: f,
                    camera: c,
                    hand: sk.handedness,
                    joints,
                });
            }
        }
    }
    Observed {
        observation: GraspObservation {
            cameras,
            frames: frame_info,
            detections,
        },
        true_poses,
        corrupted_poses,
        corrupted_detections,
    }
}
