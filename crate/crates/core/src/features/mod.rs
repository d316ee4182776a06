//! Per-point and per-voxel encodings of the hand pose relative to the object surface.

mod dropout;
mod encode;
mod io;
mod voxel;

use serde::{Deserialize, Serialize};

pub use dropout::{dropout_mask, dropped_joints, occlusion_dropout, occlusion_dropout_from, sample_dropout_camera, DROPPED_JOINTS};
pub use encode::{compute_features, mesh_features, relative_joints, select_hand, simple_joints, skeleton_features};
pub use io::{read_features, write_features, FeatureSidecar};
pub use voxel::{voxel_features, voxel_normals, VoxelFeatures};

use crate::geom::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("at least one hand is required")]
    NoHands,
    #[error("point cloud has {normals} normals for {points} points")]
    MissingNormals { points: usize, normals: usize },
    #[error("{proxies} hand proxies for {hands} hands")]
    ProxyCount { hands: usize, proxies: usize },
    #[error("feature data has {len} values, not a multiple of {dims}")]
    Shape { len: usize, dims: usize },
    #[error("invalid feature matrix: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureFamily {
    SimpleJoints,
    RelativeJoints,
    Skeleton,
    Mesh,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 4] = [
        FeatureFamily::SimpleJoints,
        FeatureFamily::RelativeJoints,
        FeatureFamily::Skeleton,
        FeatureFamily::Mesh,
    ];

    pub const fn dims(self) -> usize {
        match self {
            FeatureFamily::SimpleJoints => 63,
            FeatureFamily::RelativeJoints => 66,
            FeatureFamily::Skeleton => 40,
            FeatureFamily::Mesh => 23,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::SimpleJoints => "simple-joints",
            FeatureFamily::RelativeJoints => "relative-joints",
            FeatureFamily::Skeleton => "skeleton",
            FeatureFamily::Mesh => "mesh",
        }
    }
}

impl std::str::FromStr for FeatureFamily {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| FeatureError::Invalid(format!("unknown feature family '{s}'")))
    }
}

impl std::fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Camera and joints used by one occlusion-dropout draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutRecord {
    pub camera_position: [f64; 3],
    /// The camera looks at this point (the hand centroid).
    pub camera_target: [f64; 3],
    /// Dropped joint ids per hand, ascending.
    pub dropped_joints: Vec<Vec<usize>>,
}

impl DropoutRecord {
    pub fn camera(&self) -> Vec3 {
        Vec3::from(self.camera_position)
    }
}

/// Row-major per-point features of one family.
///
/// Besides the values, each row remembers which hand it was computed from and, for the
/// mesh family, which proxy part was closest; dropout needs both for attribution.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    family: FeatureFamily,
    data: Vec<f64>,
    row_hand: Vec<u8>,
    closest_part: Option<Vec<u8>>,
    pub dropout: Option<DropoutRecord>,
}

impl FeatureMatrix {
    pub fn new(
        family: FeatureFamily,
        data: Vec<f64>,
        row_hand: Vec<u8>,
        closest_part: Option<Vec<u8>>,
    ) -> Result<Self, FeatureError> {
        let dims = family.dims();
        if data.len() % dims != 0 {
            return Err(FeatureError::Shape { len: data.len(), dims });
        }
        let rows = data.len() / dims;
        if row_hand.len() != rows {
            return Err(FeatureError::Invalid(format!(
                "{} hand labels for {rows} rows",
                row_hand.len()
            )));
        }
        match (&closest_part, family) {
            (Some(p), FeatureFamily::Mesh) if p.len() == rows => {}
            (None, f) if f != FeatureFamily::Mesh => {}
            _ => {
                return Err(FeatureError::Invalid(
                    "closest-part labels are required for mesh features only".into(),
                ))
            }
        }
        Ok(Self {
            family,
            data,
            row_hand,
            closest_part,
            dropout: None,
        })
    }

    pub fn family(&self) -> FeatureFamily {
        self.family
    }

    pub fn dims(&self) -> usize {
        self.family.dims()
    }

    pub fn rows(&self) -> usize {
        self.row_hand.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dims();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Hand index each row was computed from.
    pub fn row_hand(&self) -> &[u8] {
        &self.row_hand
    }

    /// Closest proxy part per row (mesh family only).
    pub fn closest_part(&self) -> Option<&[u8]> {
        self.closest_part.as_deref()
    }

    fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
