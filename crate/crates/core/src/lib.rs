//! Grasp capture and hand-object contact modeling.
//!
//! The crate covers the full chain from multi-view 2D hand-joint detections to
//! evaluated contact predictions:
//!
//! - [`reconstruct`]: robust object-frame 3D joint estimation (Huber/RANSAC, PnP rescue)
//! - [`handmodel`]: 21-joint skeleton, capsule hand proxy, kinematic fitting
//! - [`contact`]: contact-map normalization, discretization and decoding
//! - [`features`]: per-point hand-pose features and occlusion dropout
//! - [`heuristic`] and [`learner`]: the two contact predictors
//! - [`analysis`] and [`metrics`]: grasp statistics and evaluation
//! - [`synth`]: seeded synthetic grasps used as ground truth for all of the above

pub mod analysis;
pub mod contact;
pub mod features;
pub mod geom;
pub mod handmodel;
pub mod heuristic;
pub mod learner;
pub mod metrics;
pub mod reconstruct;
pub mod synth;

pub use contact::{ContactDistribution, ContactMap};
pub use features::{FeatureFamily, FeatureMatrix};
pub use geom::{CameraIntrinsics, PointCloud, RigidTransform, TriMesh, Vec3, VoxelGrid};
pub use handmodel::{Handedness, HandProxy, HandSkeleton, KinematicHand};
pub use reconstruct::{Detection2D, GraspObservation, ReconstructionResult};

/// Crate version, recorded in CLI manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
