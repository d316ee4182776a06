use rayon::prelude::*;

use crate::geom::{MeshIndex, PointCloud, TriMesh, Vec3, VoxelGrid};
use crate::handmodel::{HandProxy, HandSkeleton};

use super::{compute_features, FeatureError, FeatureFamily, FeatureMatrix};

/// Hand features for every voxel of a grid plus the occupancy bit.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelFeatures {
    /// One row per voxel in linear-index order; interior rows are zero.
    pub features: FeatureMatrix,
    pub occupancy: Vec<bool>,
}

impl VoxelFeatures {
    /// Hand feature dims + 1.
    pub fn input_dims(&self) -> usize {
        self.features.dims() + 1
    }

    /// Hand features followed by occupancy (0 or 1).
    pub fn input_row(&self, index: usize) -> Vec<f64> {
        let mut row = self.features.row(index).to_vec();
        row.push(if self.occupancy[index] { 1.0 } else { 0.0 });
        row
    }
}

/// Unit normal at each voxel center: the normal of the nearest mesh face, or the
/// direction away from the nearest surface point when that face is degenerate.
pub fn voxel_normals(grid: &VoxelGrid, mesh: &TriMesh) -> Vec<Vec3> {
    let index = MeshIndex::new(mesh);
    (0..grid.voxel_count())
        .into_par_iter()
        .map(|i| {
            let c = grid.center(i);
            let hit = index.nearest(&c);
            mesh.face_normal(hit.face)
                .or_else(|| (c - hit.point).try_normalize(1e-12))
                .unwrap_or_else(Vec3::z)
        })
        .collect()
}

/// Features evaluated at voxel centers (normals from [`voxel_normals`]). Interior voxels
/// carry all-zero hand features.
pub fn voxel_features(
    grid: &VoxelGrid,
    mesh: &TriMesh,
    family: FeatureFamily,
    hands: &[HandSkeleton],
    proxies: &[HandProxy],
) -> Result<VoxelFeatures, FeatureError> {
    let points: Vec<Vec3> = (0..grid.voxel_count()).map(|i| grid.center(i)).collect();
    let cloud = PointCloud {
        points,
        normals: voxel_normals(grid, mesh),
        source_faces: None,
    };
    let fm = compute_features(family, &cloud, hands, proxies)?;
    let dims = family.dims();
    let mut data = fm.as_slice().to_vec();
    data.par_chunks_mut(dims).enumerate().for_each(|(i, row)| {
        if grid.is_interior(i) {
            row.fill(0.0);
        }
    });
    let features = FeatureMatrix::new(
        family,
        data,
        fm.row_hand().to_vec(),
        fm.closest_part().map(|p| p.to_vec()),
    )?;
    Ok(VoxelFeatures {
        features,
        occupancy: grid.occupancy().to_vec(),
    })
}
