use super::bvh::MeshIndex;
use super::primitives::{triangle_box_overlap, Aabb};
use super::{TriMesh, Vec3};

/// Voxels per axis.
pub const VOXEL_RESOLUTION: usize = 64;

/// Occupancy grid over the mesh's bounding cube.
///
/// Linear index of voxel `(x, y, z)` is `x + R·(y + R·z)` with `R = 64`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub cell_size: f64,
    occupied: Vec<bool>,
    /// Sorted linear indices of voxels intersecting at least one triangle.
    surface: Vec<u32>,
    /// `false` when the mesh was not watertight and only surface voxels are occupied.
    pub interior_filled: bool,
}

impl VoxelGrid {
    pub const RESOLUTION: usize = VOXEL_RESOLUTION;

    #[inline]
    pub fn linear_index(x: usize, y: usize, z: usize) -> usize {
        x + VOXEL_RESOLUTION * (y + VOXEL_RESOLUTION * z)
    }

    #[inline]
    pub fn coords(index: usize) -> (usize, usize, usize) {
        let r = VOXEL_RESOLUTION;
        (index % r, (index / r) % r, index / (r * r))
    }

    pub fn voxel_count(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        self.occupied[index]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    pub fn surface_voxels(&self) -> &[u32] {
        &self.surface
    }

    pub fn is_surface(&self, index: usize) -> bool {
        self.surface.binary_search(&(index as u32)).is_ok()
    }

    /// Occupied but not on the surface.
    pub fn is_interior(&self, index: usize) -> bool {
        self.occupied[index] && !self.is_surface(index)
    }

    pub fn center(&self, index: usize) -> Vec3 {
        let (x, y, z) = Self::coords(index);
        self.origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.cell_size
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn occupied_volume(&self) -> f64 {
        self.occupied_count() as f64 * self.cell_size.powi(3)
    }
}

/// 64³ occupancy voxelization. Cell size is the largest bounding-box extent / 64; smaller
/// axes are padded symmetrically. Interior voxels are filled by a ray-parity scan along +z
/// when the mesh is watertight; otherwise only surface voxels are set.
pub fn voxelize(mesh: &TriMesh) -> VoxelGrid {
    let r = VOXEL_RESOLUTION;
    let bounds = Aabb::from_points(mesh.vertices());
    let extent = bounds.extent();
    let max_extent = extent.max().max(f64::MIN_POSITIVE);
    let cell = max_extent / r as f64;
    let origin = bounds.center() - Vec3::repeat(max_extent / 2.0);
    let half = Vec3::repeat(cell / 2.0);
    let mut occupied = vec![false; r * r * r];

    let to_cell = |v: f64, axis: usize| -> usize {
        (((v - origin[axis]) / cell).floor().max(0.0) as usize).min(r - 1)
    };
    for f in 0..mesh.face_count() {
        let tri = mesh.triangle(f);
        let tb = Aabb::from_points(tri.iter());
        let lo: Vec<usize> = (0..3).map(|k| to_cell(tb.min[k], k)).collect();
        let hi: Vec<usize> = (0..3).map(|k| to_cell(tb.max[k], k)).collect();
        // Expand by one so triangles lying exactly on a cell boundary touch both neighbours.
        for z in lo[2].saturating_sub(1)..=(hi[2] + 1).min(r - 1) {
            for y in lo[1].saturating_sub(1)..=(hi[1] + 1).min(r - 1) {
                for x in lo[0].saturating_sub(1)..=(hi[0] + 1).min(r - 1) {
                    let idx = VoxelGrid::linear_index(x, y, z);
                    if occupied[idx] {
                        continue;
                    }
                    let c = origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * cell;
                    if triangle_box_overlap(&c, &half, &tri) {
                        occupied[idx] = true;
                    }
                }
            }
        }
    }
    let surface: Vec<u32> = occupied
        .iter()
        .enumerate()
        .filter_map(|(i, &o)| o.then_some(i as u32))
        .collect();

    let watertight = mesh.is_watertight();
    if watertight {
        let index = MeshIndex::new(mesh);
        let up = Vec3::z();
        let z0 = origin.z - cell;
        for y in 0..r {
            for x in 0..r {
                let crossings = column_crossings(&index, origin, cell, x, y, z0, &up);
                let mut k = 0;
                for z in 0..r {
                    let zc = origin.z + (z as f64 + 0.5) * cell - z0;
                    while k < crossings.len() && crossings[k] < zc {
                        k += 1;
                    }
                    if k % 2 == 1 {
                        occupied[VoxelGrid::linear_index(x, y, z)] = true;
                    }
                }
            }
        }
    }
    VoxelGrid {
        origin,
        cell_size: cell,
        occupied,
        surface,
        interior_filled: watertight,
    }
}

fn column_crossings(
    index: &MeshIndex,
    origin: Vec3,
    cell: f64,
    x: usize,
    y: usize,
    z0: f64,
    up: &Vec3,
) -> Vec<f64> {
    // Jitter the column off the voxel-center lattice when a ray grazes an edge.
    const JITTER: [(f64, f64); 6] = [
        (0.0, 0.0),
        (1.3e-4, 0.7e-4),
        (-2.1e-4, 1.7e-4),
        (0.9e-4, -2.3e-4),
        (3.1e-4, 2.9e-4),
        (-3.7e-4, -1.1e-4),
    ];
    for (jx, jy) in JITTER {
        let o = Vec3::new(
            origin.x + (x as f64 + 0.5 + jx) * cell,
            origin.y + (y as f64 + 0.5 + jy) * cell,
            z0,
        );
        if let Some(hits) = index.ray_crossings(&o, up) {
            return hits;
        }
    }
    Vec::new()
}
