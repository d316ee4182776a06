//! Hand skeleton, capsule surface proxy, forward kinematics and skeleton fitting.

mod fit;
mod kinematics;
mod proxy;
mod skeleton;

#[cfg(test)]
pub(crate) use kinematics::random_hand;
pub use fit::{fit_hand, fit_hand_with, FitConfig, HandFit, DEFAULT_SIGMA};
pub use kinematics::{
    forward_kinematics, parameter_bounds, rest_skeleton, FingerPose, KinematicHand, ShapeParams, ABDUCTION_LIMITS,
    FINGER_OFFSET, FLEXION_LIMITS, PARAM_COUNT, ROOT_OFFSET, SHAPE_OFFSET,
};
pub use proxy::{proxy_signed_distance, Capsule, HandProxy, PalmSlab, ProxyConfig, ProxyQuery, ProxySurfacePoint};
pub use skeleton::{
    part_joints, Finger, HandSkeleton, Handedness, DISTAL_PHALANGES, FINGERTIPS, JOINT_COUNT, MIDDLE_KNUCKLE,
    PALM_JOINTS, PALM_PART, PART_COUNT, PHALANGES, PHALANGE_COUNT, WRIST,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HandModelError {
    #[error("expected 21 joints, got {0}")]
    JointCount(usize),
    #[error("non-finite joint coordinates")]
    NonFinite,
    #[error("parameters out of range at indices {indices:?}")]
    OutOfRange { indices: Vec<usize> },
    #[error("palm joints are degenerate")]
    DegeneratePalm,
    #[error("capsule radii and palm thickness must be positive")]
    InvalidProxyConfig,
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("fit diverged after {} accepted steps", trace.len())]
    Diverged { trace: Vec<f64> },
}
