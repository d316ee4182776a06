use serde::{Deserialize, Serialize};

use crate::geom::{RigidTransform, Vec3};

use super::HandModelError;

pub const JOINT_COUNT: usize = 21;
pub const PHALANGE_COUNT: usize = 20;
/// Part id used for the palm alongside the 20 phalanges.
pub const PALM_PART: usize = 20;
pub const PART_COUNT: usize = 21;
pub const WRIST: usize = 0;
pub const MIDDLE_KNUCKLE: usize = 9;
/// Wrist followed by the five knuckles (finger base joints).
pub const PALM_JOINTS: [usize; 6] = [0, 1, 5, 9, 13, 17];
pub const FINGERTIPS: [usize; 5] = [4, 8, 12, 16, 20];
/// Phalange ids of the five distal segments (ending at a fingertip).
pub const DISTAL_PHALANGES: [usize; 5] = [3, 7, 11, 15, 19];

/// The 20 phalange segments as joint-index pairs. Phalange `4f + k` belongs to finger
/// `f` (thumb, index, middle, ring, pinky); `k = 0` is the wrist-to-knuckle segment.
pub const PHALANGES: [(usize, usize); PHALANGE_COUNT] = {
    let mut out = [(0, 0); PHALANGE_COUNT];
    let mut f = 0;
    while f < 5 {
        out[4 * f] = (WRIST, 4 * f + 1);
        out[4 * f + 1] = (4 * f + 1, 4 * f + 2);
        out[4 * f + 2] = (4 * f + 2, 4 * f + 3);
        out[4 * f + 3] = (4 * f + 3, 4 * f + 4);
        f += 1;
    }
    out
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Finger {
    Thumb = 0,
    Index = 1,
    Middle = 2,
    Ring = 3,
    Pinky = 4,
}

impl Finger {
    pub const ALL: [Finger; 5] = [Finger::Thumb, Finger::Index, Finger::Middle, Finger::Ring, Finger::Pinky];

    /// Joint indices from knuckle to tip.
    pub fn joints(self) -> [usize; 4] {
        let b = 4 * self as usize + 1;
        [b, b + 1, b + 2, b + 3]
    }
}

/// Joints touched by a part (phalange endpoints, or the six palm joints).
pub fn part_joints(part: usize) -> &'static [usize] {
    static PHALANGE_JOINTS: [[usize; 2]; PHALANGE_COUNT] = {
        let mut out = [[0; 2]; PHALANGE_COUNT];
        let mut i = 0;
        while i < PHALANGE_COUNT {
            out[i] = [PHALANGES[i].0, PHALANGES[i].1];
            i += 1;
        }
        out
    };
    if part == PALM_PART {
        &PALM_JOINTS
    } else {
        &PHALANGE_JOINTS[part]
    }
}

/// 21 joints in OpenPose order (wrist; then thumb, index, middle, ring, pinky with four
/// joints each from knuckle to tip), meters.
#[derive(Clone, Debug, PartialEq)]
pub struct HandSkeleton {
    pub handedness: Handedness,
    joints: [Vec3; JOINT_COUNT],
}

impl HandSkeleton {
    pub fn new(handedness: Handedness, joints: [Vec3; JOINT_COUNT]) -> Result<Self, HandModelError> {
        if joints.iter().any(|j| !j.iter().all(|c| c.is_finite())) {
            return Err(HandModelError::NonFinite);
        }
        Ok(Self { handedness, joints })
    }

    pub fn from_slice(handedness: Handedness, joints: &[Vec3]) -> Result<Self, HandModelError> {
        let arr: [Vec3; JOINT_COUNT] = joints
            .try_into()
            .map_err(|_| HandModelError::JointCount(joints.len()))?;
        Self::new(handedness, arr)
    }

    pub fn joints(&self) -> &[Vec3; JOINT_COUNT] {
        &self.joints
    }

    pub fn joint(&self, i: usize) -> Vec3 {
        self.joints[i]
    }

    pub fn segment(&self, phalange: usize) -> (Vec3, Vec3) {
        let (a, b) = PHALANGES[phalange];
        (self.joints[a], self.joints[b])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        PHALANGES.iter().map(|&(a, b)| (self.joints[a], self.joints[b]))
    }

    pub fn centroid(&self) -> Vec3 {
        self.joints.iter().sum::<Vec3>() / JOINT_COUNT as f64
    }

    /// Row-major `[x0, y0, z0, x1, ...]`.
    pub fn flatten(&self) -> [f64; 3 * JOINT_COUNT] {
        let mut out = [0.0; 3 * JOINT_COUNT];
        for (i, j) in self.joints.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(j.as_slice());
        }
        out
    }

    pub fn transformed(&self, t: &RigidTransform) -> HandSkeleton {
        HandSkeleton {
            handedness: self.handedness,
            joints: self.joints.map(|j| t.apply(&j)),
        }
    }

    pub fn map_joints(&self, f: impl Fn(&Vec3) -> Vec3) -> HandSkeleton {
        HandSkeleton {
            handedness: self.handedness,
            joints: self.joints.map(|j| f(&j)),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkeletonJson {
    handedness: Handedness,
    joints: Vec<[f64; 3]>,
}

impl Serialize for HandSkeleton {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SkeletonJson {
            handedness: self.handedness,
            joints: self.joints.iter().map(|j| [j.x, j.y, j.z]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HandSkeleton {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = SkeletonJson::deserialize(d)?;
        let joints: Vec<Vec3> = raw.joints.iter().map(|j| Vec3::from(*j)).collect();
        HandSkeleton::from_slice(raw.handedness, &joints).map_err(serde::de::Error::custom)
    }
}
