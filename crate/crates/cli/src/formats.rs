//! On-disk layout of a grasp directory:
//!
//! - `object.ply`: object mesh (object frame) with vertex normals and, when known, a
//!   per-vertex `contact` scalar
//! - `hands.json`: hand skeletons as `[{"handedness", "joints": [[x, y, z]; 21]}]`
//! - `record.json`: object name, intent, participant and optional symmetry axis
//! - `observation.json`: cameras, frames and 2D detections (input to `reconstruct`)

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use graspkit_core::analysis::Intent;
use graspkit_core::geom::io::PlyData;
use graspkit_core::{ContactMap, Handedness, HandSkeleton, PointCloud, TriMesh, Vec3};

use crate::run::Run;

pub const OBJECT_PLY: &str = "object.ply";
pub const HANDS_JSON: &str = "hands.json";
pub const RECORD_JSON: &str = "record.json";
pub const OBSERVATION_JSON: &str = "observation.json";
pub const CONTACT_FIELD: &str = "contact";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonJson {
    pub handedness: Handedness,
    pub joints: Vec<[f64; 3]>,
}

impl From<&HandSkeleton> for SkeletonJson {
    fn from(s: &HandSkeleton) -> Self {
        Self {
            handedness: s.handedness,
            joints: s.joints().iter().map(|j| [j.x, j.y, j.z]).collect(),
        }
    }
}

impl SkeletonJson {
    pub fn to_skeleton(&self) -> Result<HandSkeleton> {
        let joints: Vec<Vec3> = self.joints.iter().map(|&j| Vec3::from(j)).collect();
        Ok(HandSkeleton::from_slice(self.handedness, &joints)?)
    }
}

pub fn skeletons_json(hands: &[HandSkeleton]) -> Vec<SkeletonJson> {
    hands.iter().map(SkeletonJson::from).collect()
}

pub fn read_hands(run: &mut Run, path: &Path) -> Result<Vec<HandSkeleton>> {
    let raw: Vec<SkeletonJson> = run.read_json(path)?;
    if raw.is_empty() {
        anyhow::bail!("{} lists no hands", path.display());
    }
    raw.iter()
        .enumerate()
        .map(|(i, s)| s.to_skeleton().with_context(|| format!("{}: hand {i}", path.display())))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordJson {
    pub object: String,
    pub intent: Intent,
    pub participant: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry_axis: Option<[f64; 3]>,
}

/// A mesh-backed PLY: geometry, normals and an optional named scalar.
pub fn mesh_ply(mesh: &TriMesh, scalars: &[(&str, &[f64])]) -> PlyData {
    let mut ply = PlyData::from_mesh(mesh);
    ply.normals = Some(mesh.vertex_normals().to_vec());
    for (name, values) in scalars {
        ply = ply.with_scalar(name, values.to_vec());
    }
    ply
}

pub fn ply_mesh(ply: &PlyData, path: &Path) -> Result<TriMesh> {
    if ply.faces.is_empty() {
        anyhow::bail!("{} has no faces; a triangle mesh is required", path.display());
    }
    ply.to_mesh().with_context(|| format!("invalid mesh in {}", path.display()))
}

pub fn ply_contact(ply: &PlyData, field: &str, path: &Path) -> Result<ContactMap> {
    let values = ply
        .scalars
        .get(field)
        .with_context(|| format!("{} has no per-vertex '{field}' property", path.display()))?;
    ContactMap::new(values.clone()).with_context(|| format!("{}: '{field}' is not a contact map", path.display()))
}

/// A loaded grasp directory. `contact` is present when `object.ply` carries one.
pub struct GraspDir {
    pub dir: PathBuf,
    pub mesh: TriMesh,
    pub contact: Option<ContactMap>,
    pub hands: Vec<HandSkeleton>,
}

impl GraspDir {
    /// `hands` replaces the directory's own `hands.json` when given.
    pub fn load(run: &mut Run, dir: &Path, hands: Option<&Path>) -> Result<Self> {
        let ply_path = dir.join(OBJECT_PLY);
        let ply = run.read_ply(&ply_path)?;
        let mesh = ply_mesh(&ply, &ply_path)?;
        let contact = match ply.scalars.contains_key(CONTACT_FIELD) {
            true => Some(ply_contact(&ply, CONTACT_FIELD, &ply_path)?),
            false => None,
        };
        let hands_path = hands.map(Path::to_path_buf).unwrap_or_else(|| dir.join(HANDS_JSON));
        let hands = read_hands(run, &hands_path)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            mesh,
            contact,
            hands,
        })
    }

    pub fn contact(&self) -> Result<&ContactMap> {
        self.contact
            .as_ref()
            .with_context(|| format!("{} carries no contact map", self.dir.join(OBJECT_PLY).display()))
    }

    pub fn points(&self) -> PointCloud {
        PointCloud::from_mesh_vertices(&self.mesh)
    }

    pub fn record(&self, run: &mut Run) -> Result<RecordJson> {
        run.read_json(&self.dir.join(RECORD_JSON))
    }
}

/// Comma-separated numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| format!("invalid list entry {t:?}")))
        .collect()
}
