//! Geometry primitives shared by every pipeline stage: meshes, point clouds, spatial
//! queries, pinhole projection and voxelization. Units are meters throughout.

mod bvh;
mod camera;
pub mod io;
mod mesh;
pub mod primitives;
pub mod shapes;
mod transform;
mod voxel;

pub use bvh::{MeshIndex, NearestHit};
pub use camera::{backproject, look_at, project, CameraIntrinsics};
pub use mesh::{compute_vertex_normals, point_budget, sample_surface, PointCloud, TriMesh, VertexNormals};
pub use primitives::{point_segment_distance, Aabb};
pub use transform::RigidTransform;
pub use voxel::{voxelize, VoxelGrid, VOXEL_RESOLUTION};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("mesh has no vertices or faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    FaceIndexOutOfRange { face: usize, index: usize, vertex_count: usize },
    #[error("non-finite {0} coordinates")]
    NonFinite(&'static str),
    #[error("{what}: expected {expected} entries, got {actual}")]
    LengthMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("normal {0} is not unit length")]
    NonUnitNormal(usize),
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported mesh format '{0}'")]
    UnsupportedFormat(String),
    #[error("invalid PLY property name '{0}'")]
    InvalidPropertyName(String),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exact closest point on the indexed mesh.
pub fn nearest_on_mesh(index: &MeshIndex, query: &Vec3) -> NearestHit {
    index.nearest(query)
}
