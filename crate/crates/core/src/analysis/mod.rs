//! Dataset analyses over captured grasps: contact-to-hand-part association, hand contact
//! probabilities, active areas, contact areas, pose spread and clustering, and the
//! held-out splits.

mod areas;
mod association;
mod pose;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contact::ContactMap;
use crate::geom::{TriMesh, Vec3};
use crate::handmodel::{HandModelError, HandSkeleton};

pub use areas::{
    active_areas, contact_area, contact_distance, hand_contact_probability, part_probability_csv, phalange_area_vector,
    ContactRegion, GraspAnalysis, CM2_PER_M2,
};
pub use association::{
    associate, associate_with, Association, AssociationConfig, AssociationLevel, PartAssociation,
    DEFAULT_POINT_SPACING,
};
pub use pose::{
    cluster_poses, group_spread, joint_stddev, normalize_and_align, spread_csv, AlignedSkeleton, Clustering,
    GroupSpread, JointSpread, SymmetryAlignment, REFERENCE_HAND_SIZE,
};
pub use split::{split, Split, SplitKind, OBJECT_SPLIT_TEST, PARTICIPANT_SPLIT_TEST};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no grasps to analyze")]
    EmptySet,
    #[error("grasp {grasp} references unknown object mesh {mesh:?}")]
    UnresolvedMesh { grasp: usize, mesh: String },
    #[error("grasp {grasp}: contact map has {contact} values for {vertices} mesh vertices")]
    ContactLength { grasp: usize, contact: usize, vertices: usize },
    #[error("grasp {0} has no hands")]
    NoHands(usize),
    #[error("grasps of object {0:?} do not share one mesh")]
    MeshMismatch(String),
    #[error("wrist and middle knuckle coincide")]
    DegenerateHand,
    #[error("symmetry axis must be a non-zero finite vector")]
    InvalidAxis,
    #[error("need at least {needed} grasps, got {got}")]
    TooFewGrasps { needed: usize, got: usize },
    #[error("unknown split {0:?}; expected \"object\" or \"participant\"")]
    UnknownSplit(String),
    #[error("{0} split leaves an empty train or test side")]
    EmptySplit(SplitKind),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    HandModel(#[from] HandModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Use,
    Handoff,
}

impl std::fmt::Display for Intent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Intent::Use => "use",
            Intent::Handoff => "handoff",
        })
    }
}

/// One captured grasp. `contact` is indexed by the vertices of the referenced mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspRecord {
    pub object: String,
    pub intent: Intent,
    pub participant: u32,
    pub contact: ContactMap,
    pub hands: Vec<HandSkeleton>,
    pub mesh: String,
}

#[derive(Clone, Debug)]
pub struct ObjectInfo {
    pub mesh: TriMesh,
    /// Rotational symmetry axis through the object-frame origin, if any.
    pub symmetry_axis: Option<Vec3>,
}

/// Grasps plus the meshes they reference. Construction checks that every reference
/// resolves and that contact maps match their mesh.
#[derive(Clone, Debug)]
pub struct GraspSet {
    objects: BTreeMap<String, ObjectInfo>,
    grasps: Vec<GraspRecord>,
}

impl GraspSet {
    pub fn new(objects: BTreeMap<String, ObjectInfo>, grasps: Vec<GraspRecord>) -> Result<Self, AnalysisError> {
        for (i, g) in grasps.iter().enumerate() {
            let info = objects.get(&g.mesh).ok_or_else(|| AnalysisError::UnresolvedMesh {
                grasp: i,
                mesh: g.mesh.clone(),
            })?;
            if g.contact.len() != info.mesh.vertex_count() {
                return Err(AnalysisError::ContactLength {
                    grasp: i,
                    contact: g.contact.len(),
                    vertices: info.mesh.vertex_count(),
                });
            }
            if g.hands.is_empty() {
                return Err(AnalysisError::NoHands(i));
            }
        }
        Ok(Self { objects, grasps })
    }

    pub fn grasps(&self) -> &[GraspRecord] {
        &self.grasps
    }

    pub fn objects(&self) -> &BTreeMap<String, ObjectInfo> {
        &self.objects
    }

    pub fn object(&self, grasp: &GraspRecord) -> &ObjectInfo {
        &self.objects[&grasp.mesh]
    }

    pub fn len(&self) -> usize {
        self.grasps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grasps.is_empty()
    }

    /// Subset by grasp indices, keeping all meshes.
    pub fn select(&self, indices: &[usize]) -> GraspSet {
        GraspSet {
            objects: self.objects.clone(),
            grasps: indices.iter().map(|&i| self.grasps[i].clone()).collect(),
        }
    }
}
