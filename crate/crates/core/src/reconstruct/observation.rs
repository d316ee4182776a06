use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geom::{CameraIntrinsics, RigidTransform};
use crate::handmodel::{Handedness, JOINT_COUNT};

use super::ReconstructError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    /// `camera_from_world`.
    pub extrinsic: RigidTransform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameInfo {
    /// `world_from_object` reported by the object tracker.
    pub pose: RigidTransform,
    /// False when tracking reported failure for this frame.
    #[serde(default = "default_true")]
    pub valid: bool,
}

fn default_true() -> bool {
    true
}

/// 21 detected joints `[u, v, w]` (pixels, confidence) for one hand in one frame of one camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection2D {
    pub frame: usize,
    pub camera: usize,
    #[serde(default = "default_hand")]
    pub hand: Handedness,
    pub joints: Vec<[f64; 3]>,
}

fn default_hand() -> Handedness {
    Handedness::Right
}

impl Detection2D {
    #[inline]
    pub fn pixel(&self, j: usize) -> Vector2<f64> {
        Vector2::new(self.joints[j][0], self.joints[j][1])
    }

    #[inline]
    pub fn confidence(&self, j: usize) -> f64 {
        self.joints[j][2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    pub frame: usize,
    pub camera: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspObservation {
    pub cameras: Vec<Camera>,
    pub frames: Vec<FrameInfo>,
    pub detections: Vec<Detection2D>,
}

impl GraspObservation {
    pub fn validate(&self) -> Result<(), ReconstructError> {
        let bad = |m: String| Err(ReconstructError::InvalidObservation(m));
        if self.cameras.is_empty() {
            return bad("no cameras".into());
        }
        if self.frames.len() < 2 {
            return bad(format!("need at least 2 frames, got {}", self.frames.len()));
        }
        for (i, c) in self.cameras.iter().enumerate() {
            if let Err(e) = c.intrinsics.validate() {
                return bad(format!("camera {i}: {e}"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (k, d) in self.detections.iter().enumerate() {
            if d.frame >= self.frames.len() || d.camera >= self.cameras.len() {
                return bad(format!("detection {k} references frame {} camera {}", d.frame, d.camera));
            }
            if d.joints.len() != JOINT_COUNT {
                return bad(format!("detection {k} has {} joints", d.joints.len()));
            }
            for j in &d.joints {
                if !(j[0].is_finite() && j[1].is_finite()) || !(0.0..=1.0).contains(&j[2]) {
                    return bad(format!("detection {k} has invalid entry {j:?}"));
                }
            }
            if !seen.insert((d.frame, d.camera, d.hand)) {
                return bad(format!("duplicate detection for frame {} camera {}", d.frame, d.camera));
            }
        }
        Ok(())
    }

    pub fn camera_from_object(&self, frame: usize, camera: usize) -> RigidTransform {
        self.cameras[camera].extrinsic * self.frames[frame].pose
    }

    pub fn hands(&self) -> Vec<Handedness> {
        let mut out: Vec<Handedness> = Vec::new();
        for d in &self.detections {
            if !out.contains(&d.hand) {
                out.push(d.hand);
            }
        }
        out.sort_by_key(|h| matches!(h, Handedness::Right));
        out
    }
}
