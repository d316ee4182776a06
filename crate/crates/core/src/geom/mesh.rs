use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::OnceLock;

use super::{GeomError, Vec3};

/// Triangle mesh in meters. Vertex normals are computed on first use.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    normals: OnceLock<VertexNormals>,
}

/// Result of [`compute_vertex_normals`].
#[derive(Clone, Debug, PartialEq)]
pub struct VertexNormals {
    pub normals: Vec<Vec3>,
    /// Vertices with a zero-area (or empty) star; their normal is set to +z.
    pub degenerate: Vec<usize>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self, GeomError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(GeomError::EmptyMesh);
        }
        let n = vertices.len();
        if let Some((i, f)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&v| v as usize >= n))
        {
            return Err(GeomError::FaceIndexOutOfRange { face: i, index: *f.iter().max().unwrap() as usize, vertex_count: n });
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeomError::NonFinite("mesh vertex"));
        }
        Ok(Self {
            vertices,
            faces,
            normals: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Area-weighted vertex normals, cached.
    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.normals.get_or_init(|| compute_vertex_normals(self)).normals
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit face normal; `None` for zero-area faces.
    pub fn face_normal(&self, face: usize) -> Option<Vec3> {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).try_normalize(0.0)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Barycentric vertex areas: one third of every incident face area.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.vertices.len()];
        for (i, f) in self.faces.iter().enumerate() {
            let a = self.face_area(i) / 3.0;
            for &v in f {
                areas[v as usize] += a;
            }
        }
        areas
    }

    /// Face indices incident to each vertex.
    pub fn vertex_faces(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (i, f) in self.faces.iter().enumerate() {
            for &v in f {
                out[v as usize].push(i as u32);
            }
        }
        out
    }

    /// Closed two-manifold check: every undirected edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.faces.len() * 3);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if a == b {
                    return false;
                }
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges.values().all(|&c| c == 2)
    }

    /// Enclosed volume via the divergence theorem (meaningful for closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0] as usize];
                let b = self.vertices[f[1] as usize];
                let c = self.vertices[f[2] as usize];
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn transformed(&self, t: &super::RigidTransform) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            faces: self.faces.clone(),
            normals: OnceLock::new(),
        }
    }
}

pub fn compute_vertex_normals(mesh: &TriMesh) -> VertexNormals {
    let mut acc = vec![Vec3::zeros(); mesh.vertices.len()];
    let mut scale = 0.0f64;
    for f in &mesh.faces {
        let [a, b, c] = [
            mesh.vertices[f[0] as usize],
            mesh.vertices[f[1] as usize],
            mesh.vertices[f[2] as usize],
        ];
        // |cross| = 2·area, so summing raw cross products is area weighting.
        let n = (b - a).cross(&(c - a));
        scale = scale.max(n.norm());
        for &v in f {
            acc[v as usize] += n;
        }
    }
    let mut degenerate = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len <= 1e-12 * scale || len == 0.0 {
                degenerate.push(i);
                Vec3::z()
            } else {
                n / len
            }
        })
        .collect();
    VertexNormals {
        normals,
        degenerate,
    }
}

/// Points with unit normals and optional source-face provenance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub source_faces: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self, GeomError> {
        if points.len() != normals.len() {
            return Err(GeomError::LengthMismatch {
                what: "point cloud normals",
                expected: points.len(),
                actual: normals.len(),
            });
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(GeomError::NonUnitNormal(i));
        }
        Ok(Self {
            points,
            normals,
            source_faces: None,
        })
    }

    /// Mesh vertices with their area-weighted normals.
    pub fn from_mesh_vertices(mesh: &TriMesh) -> Self {
        Self {
            points: mesh.vertices().to_vec(),
            normals: mesh.vertex_normals().to_vec(),
            source_faces: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &super::RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            normals: self.normals.iter().map(|n| t.apply_vector(n)).collect(),
            source_faces: self.source_faces.clone(),
        }
    }
}

/// Area-weighted uniform sampling of `n` surface points, deterministic in `seed`.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud, GeomError> {
    let mut cdf = Vec::with_capacity(mesh.face_count());
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(GeomError::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let face = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let s = rng.random::<f64>().sqrt();
        let t = rng.random::<f64>();
        let p = a * (1.0 - s) + b * (s * (1.0 - t)) + c * (s * t);
        points.push(p);
        normals.push(mesh.face_normal(face).unwrap_or_else(Vec3::z));
        faces.push(face as u32);
    }
    Ok(PointCloud {
        points,
        normals,
        source_faces: Some(faces),
    })
}

/// Point budget for an object of the given surface area (m²): 400k points per m², clamped to 1K–30K.
pub fn point_budget(surface_area: f64) -> usize {
    const POINTS_PER_M2: f64 = 400_000.0;
    ((surface_area * POINTS_PER_M2).round() as usize).clamp(1_000, 30_000)
}
