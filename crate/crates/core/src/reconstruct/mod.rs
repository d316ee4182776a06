//! Object-frame 3D joints from multi-frame, multi-camera 2D detections with known object
//! poses, made robust by RANSAC over frame-camera pairs and a second pass that re-estimates
//! object poses of failed frames.

mod observation;
mod pnp;
mod ransac;
mod robust;
mod triangulate;

#[cfg(test)]
pub(crate) mod fixture;

pub use observation::{Camera, Detection2D, FrameInfo, GraspObservation, PairId};
pub use pnp::{pnp_pose, pnp_pose_multi, PnpView};
pub use ransac::{
    ransac_reconstruct, reconstruct_all, second_pass_rescue, PairError, ReconstructConfig, ReconstructionResult,
    RescuedFrame,
};
pub use robust::huber;
pub use triangulate::{optimize_joints, residual, triangulate_init, JointResiduals, Triangulation};

use crate::geom::GeomError;

pub const DEFAULT_HUBER_DELTA: f64 = 5.0;
pub const DEFAULT_INLIER_PX: f64 = 12.0;
pub const DEFAULT_RANSAC_ITERATIONS: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ReconstructError {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("joints {joints:?} have fewer than two usable views")]
    Uninitialized { joints: Vec<usize> },
    #[error("all confidences are zero")]
    NoConfidence,
    #[error("no model with at least 3 inlier pairs across 2 frames (best had {best_inliers})")]
    ReconstructionFailed { best_inliers: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}
