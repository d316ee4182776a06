//! Small multi-camera scenes for reconstruction tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::geom::{look_at, project, CameraIntrinsics, RigidTransform, Vec3};
use crate::handmodel::{forward_kinematics, Handedness, KinematicHand, JOINT_COUNT};

use super::observation::{Camera, Detection2D, FrameInfo, GraspObservation};

#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub cameras: usize,
    pub frames: usize,
    pub pixel_noise: f64,
    pub corrupted_pose_fraction: f64,
    pub corrupted_detection_fraction: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            cameras: 3,
            frames: 10,
            pixel_noise: 0.0,
            corrupted_pose_fraction: 0.0,
            corrupted_detection_fraction: 0.0,
        }
    }
}

pub struct Scenario {
    pub obs: GraspObservation,
    pub joints: [Vec3; JOINT_COUNT],
    pub true_poses: Vec<RigidTransform>,
    pub corrupted_poses: Vec<usize>,
    pub corrupted_detections: Vec<usize>,
}

pub fn random_rotation(rng: &mut ChaCha8Rng, min_angle: f64, max_angle: f64) -> RigidTransform {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(min_angle..=max_angle);
    RigidTransform::from_axis_angle(Vec3::from(axis) * angle, Vec3::zeros())
}

pub fn scenario(spec: &ScenarioSpec, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hand = KinematicHand::rest(Handedness::Right);
    for p in &mut hand.pose {
        p.flexion = [rng.random_range(0.0..0.8), rng.random_range(0.0..0.8), rng.random_range(0.0..0.5)];
    }
    hand.root = RigidTransform::from_translation(Vec3::new(0.0, -0.09, 0.04));
    let joints = *forward_kinematics(&hand).unwrap().joints();

    let intrinsics = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0, 1920, 1080).unwrap();
    let cameras: Vec<Camera> = (0..spec.cameras)
        .map(|c| {
            let phi = 2.0 * std::f64::consts::PI * c as f64 / spec.cameras as f64 + 0.3;
            let eye = Vec3::new(phi.cos(), phi.sin(), 0.4);
            Camera {
                intrinsics,
                extrinsic: look_at(&eye, &Vec3::zeros(), &Vec3::z()).unwrap(),
            }
        })
        .collect();

    let n_pose = (spec.corrupted_pose_fraction * spec.frames as f64).round() as usize;
    let n_det = (spec.corrupted_detection_fraction * spec.frames as f64).round() as usize;
    let mut order: Vec<usize> = (0..spec.frames).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut corrupted_poses: Vec<usize> = order[..n_pose].to_vec();
    let mut corrupted_detections: Vec<usize> = order[n_pose..n_pose + n_det].to_vec();
    corrupted_poses.sort();
    corrupted_detections.sort();

    let noise = Normal::new(0.0, spec.pixel_noise.max(1e-300)).unwrap();
    let bad = Normal::new(0.0, 60.0).unwrap();
    let mut frames = Vec::new();
    let mut true_poses = Vec::new();
    let mut detections = Vec::new();
    for f in 0..spec.frames {
        let t = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let pose = RigidTransform::from_translation(t) * random_rotation(&mut rng, 0.0, std::f64::consts::PI);
        true_poses.push(pose);
        let reported = if corrupted_poses.contains(&f) {
            pose * random_rotation(&mut rng, 20f64.to_radians(), std::f64::consts::PI)
        } else {
            pose
        };
        frames.push(FrameInfo {
            pose: reported,
            valid: true,
        });
        for (c, cam) in cameras.iter().enumerate() {
            let cfo = cam.extrinsic * pose;
            let dist = if corrupted_detections.contains(&f) { &bad } else { &noise };
            let dets = joints
                .iter()
                .map(|x| {
                    let p = project(x, &cam.intrinsics, &cfo).unwrap();
                    let (du, dv) = if spec.pixel_noise > 0.0 || dist.std_dev() > 1.0 {
                        (dist.sample(&mut rng), dist.sample(&mut rng))
                    } else {
                        (0.0, 0.0)
                    };
                    [p.x + du, p.y + dv, 1.0]
                })
                .collect();
            detections.push(Detection2D {
                frame: f,
                camera: c,
                hand: Handedness::Right,
                joints: dets,
            });
        }
    }
    Scenario {
        obs: GraspObservation {
            cameras,
            frames,
            detections,
        },
        joints,
        true_poses,
        corrupted_poses,
        corrupted_detections,
    }
}
