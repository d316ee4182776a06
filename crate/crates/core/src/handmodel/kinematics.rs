//! Simplified kinematic hand: a rest template, six bone-length scales and per-finger
//! abduction/flexion angles.

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::geom::{RigidTransform, Vec3};

use super::skeleton::{Handedness, HandSkeleton, JOINT_COUNT, WRIST};
use super::HandModelError;

pub const FLEXION_LIMITS: (f64, f64) = (-30.0 * std::f64::consts::PI / 180.0, 110.0 * std::f64::consts::PI / 180.0);
pub const ABDUCTION_LIMITS: (f64, f64) = (-30.0 * std::f64::consts::PI / 180.0, 30.0 * std::f64::consts::PI / 180.0);

/// Length of [`KinematicHand::to_vector`]: 6 shape, 6 root, 5 × 4 finger angles.
pub const PARAM_COUNT: usize = 32;
pub const SHAPE_OFFSET: usize = 0;
pub const ROOT_OFFSET: usize = 6;
pub const FINGER_OFFSET: usize = 12;

/// Right-hand rest template in the hand frame: wrist at the origin, fingers along +y,
/// palm facing -z, thumb on the -x side.
struct FingerTemplate {
    knuckle: [f64; 3],
    direction: [f64; 3],
    bones: [f64; 3],
}

const TEMPLATE: [FingerTemplate; 5] = [
    FingerTemplate {
        knuckle: [-0.020, 0.025, -0.010],
        direction: [-0.6, 0.8, -0.2],
        bones: [0.040, 0.032, 0.025],
    },
    FingerTemplate {
        knuckle: [-0.025, 0.085, 0.0],
        direction: [-0.08, 1.0, 0.0],
        bones: [0.040, 0.025, 0.020],
    },
    FingerTemplate {
        knuckle: [-0.005, 0.090, 0.0],
        direction: [0.0, 1.0, 0.0],
        bones: [0.045, 0.028, 0.022],
    },
    FingerTemplate {
        knuckle: [0.013, 0.085, 0.0],
        direction: [0.07, 1.0, 0.0],
        bones: [0.042, 0.027, 0.021],
    },
    FingerTemplate {
        knuckle: [0.030, 0.075, 0.0],
        direction: [0.15, 1.0, 0.0],
        bones: [0.033, 0.020, 0.018],
    },
];

const PALMAR: [f64; 3] = [0.0, 0.0, -1.0];

fn mirror(v: [f64; 3], handedness: Handedness) -> Vec3 {
    match handedness {
        Handedness::Right => Vec3::from(v),
        Handedness::Left => Vec3::new(-v[0], v[1], v[2]),
    }
}

/// Per-finger rest frame: bone direction, palmar normal, flexion axis.
#[derive(Clone, Copy, Debug)]
struct FingerFrame {
    knuckle: Vec3,
    direction: Vec3,
    palmar: Vec3,
    flexion_axis: Vec3,
    bones: [f64; 3],
}

fn finger_frame(finger: usize, handedness: Handedness) -> FingerFrame {
    let t = &TEMPLATE[finger];
    let direction = mirror(t.direction, handedness).normalize();
    let n = mirror(PALMAR, handedness);
    let palmar = (n - direction * n.dot(&direction)).normalize();
    // Rotating `direction` about this axis by a positive angle turns it toward the palm.
    let flexion_axis = direction.cross(&palmar);
    FingerFrame {
        knuckle: mirror(t.knuckle, handedness),
        direction,
        palmar,
        flexion_axis,
        bones: t.bones,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeParams {
    pub global: f64,
    /// Thumb, index, middle, ring, pinky.
    pub fingers: [f64; 5],
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            global: 1.0,
            fingers: [1.0; 5],
        }
    }
}

impl ShapeParams {
    pub fn as_array(&self) -> [f64; 6] {
        let f = self.fingers;
        [self.global, f[0], f[1], f[2], f[3], f[4]]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerPose {
    /// Side-to-side rotation at the knuckle, radians.
    pub abduction: f64,
    /// Knuckle, middle and distal flexion, radians. Positive curls toward the palm.
    pub flexion: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicHand {
    pub handedness: Handedness,
    pub shape: ShapeParams,
    /// World-from-hand transform.
    pub root: RigidTransform,
    pub pose: [FingerPose; 5],
}

impl KinematicHand {
    pub fn rest(handedness: Handedness) -> Self {
        Self {
            handedness,
            shape: ShapeParams::default(),
            root: RigidTransform::identity(),
            pose: [FingerPose::default(); 5],
        }
    }

    /// Flat parameter vector; the root rotation is stored as an axis-angle vector.
    pub fn to_vector(&self) -> [f64; PARAM_COUNT] {
        let mut x = [0.0; PARAM_COUNT];
        x[SHAPE_OFFSET..SHAPE_OFFSET + 6].copy_from_slice(&self.shape.as_array());
        let aa = self.root.rotation().scaled_axis();
        x[ROOT_OFFSET..ROOT_OFFSET + 3].copy_from_slice(aa.as_slice());
        x[ROOT_OFFSET + 3..ROOT_OFFSET + 6].copy_from_slice(self.root.translation().as_slice());
        for (f, p) in self.pose.iter().enumerate() {
            let o = FINGER_OFFSET + 4 * f;
            x[o] = p.abduction;
            x[o + 1..o + 4].copy_from_slice(&p.flexion);
        }
        x
    }

    pub fn from_vector(handedness: Handedness, x: &[f64; PARAM_COUNT]) -> Self {
        let s = &x[SHAPE_OFFSET..SHAPE_OFFSET + 6];
        let shape = ShapeParams {
            global: s[0],
            fingers: [s[1], s[2], s[3], s[4], s[5]],
        };
        let root = RigidTransform::from_axis_angle(
            Vec3::new(x[ROOT_OFFSET], x[ROOT_OFFSET + 1], x[ROOT_OFFSET + 2]),
            Vec3::new(x[ROOT_OFFSET + 3], x[ROOT_OFFSET + 4], x[ROOT_OFFSET + 5]),
        );
        let pose = std::array::from_fn(|f| {
            let o = FINGER_OFFSET + 4 * f;
            FingerPose {
                abduction: x[o],
                flexion: [x[o + 1], x[o + 2], x[o + 3]],
            }
        });
        Self {
            handedness,
            shape,
            root,
            pose,
        }
    }

    /// Indices into [`Self::to_vector`] of parameters outside their allowed range.
    pub fn violations(&self) -> Vec<usize> {
        let x = self.to_vector();
        (0..PARAM_COUNT)
            .filter(|&i| match parameter_bounds(i) {
                Some((lo, hi)) => !(x[i] >= lo && x[i] <= hi),
                None => !x[i].is_finite(),
            })
            .collect()
    }

    /// Bone length of phalange `4f + k` implied by the shape parameters.
    pub fn bone_length(&self, finger: usize, k: usize) -> f64 {
        let frame = finger_frame(finger, self.handedness);
        let s = self.shape.global * self.shape.fingers[finger];
        if k == 0 {
            s * frame.knuckle.norm()
        } else {
            s * frame.bones[k - 1]
        }
    }
}

/// Allowed closed interval for parameter `i`, or `None` when unbounded (root).
pub fn parameter_bounds(i: usize) -> Option<(f64, f64)> {
    if i < ROOT_OFFSET {
        Some((f64::MIN_POSITIVE, f64::INFINITY))
    } else if i < FINGER_OFFSET {
        None
    } else if (i - FINGER_OFFSET) % 4 == 0 {
        Some(ABDUCTION_LIMITS)
    } else {
        Some(FLEXION_LIMITS)
    }
}

/// Joint positions without limit checks; the hand must hold finite parameters.
pub(crate) fn joints_unchecked(hand: &KinematicHand) -> [Vec3; JOINT_COUNT] {
    let mut local = [Vec3::zeros(); JOINT_COUNT];
    for f in 0..5 {
        let frame = finger_frame(f, hand.handedness);
        let s = hand.shape.global * hand.shape.fingers[f];
        let pose = &hand.pose[f];
        let base = 4 * f + 1;
        local[base] = frame.knuckle * s;
        let abd = Rotation3::from_axis_angle(&Unit::new_unchecked(frame.palmar), pose.abduction);
        let axis = Unit::new_unchecked(frame.flexion_axis);
        let mut r = abd;
        for k in 0..3 {
            r *= Rotation3::from_axis_angle(&axis, pose.flexion[k]);
            local[base + k + 1] = local[base + k] + r * frame.direction * (s * frame.bones[k]);
        }
    }
    local[WRIST] = Vec3::zeros();
    local.map(|p| hand.root.apply(&p))
}

pub fn forward_kinematics(hand: &KinematicHand) -> Result<HandSkeleton, HandModelError> {
    let bad = hand.violations();
    if !bad.is_empty() {
        return Err(HandModelError::OutOfRange { indices: bad });
    }
    HandSkeleton::new(hand.handedness, joints_unchecked(hand))
}

/// The rest template as a skeleton (β = 1, θ = 0, identity root).
pub fn rest_skeleton(handedness: Handedness) -> HandSkeleton {
    HandSkeleton::new(handedness, joints_unchecked(&KinematicHand::rest(handedness)))
        .expect("template is finite")
}

/// Random in-range hand: β in [0.8, 1.25], angles uniform within limits.
#[cfg(test)]
pub(crate) fn random_hand(rng: &mut rand_chacha::ChaCha8Rng, handedness: Handedness) -> KinematicHand {
    use rand::Rng;
    let mut x = [0.0; PARAM_COUNT];
    for (i, v) in x.iter_mut().enumerate() {
        *v = match parameter_bounds(i) {
            Some(_) if i < ROOT_OFFSET => rng.random_range(0.8..1.25),
            Some((lo, hi)) => rng.random_range(lo..hi),
            None if i < ROOT_OFFSET + 3 => rng.random_range(-2.0..2.0),
            None => rng.random_range(-0.5..0.5),
        };
    }
    KinematicHand::from_vector(handedness, &x)
}
