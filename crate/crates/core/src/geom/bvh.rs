//! Bounding-volume hierarchy over mesh triangles: exact nearest-point and ray-parity queries.

use super::primitives::{closest_point_on_triangle, ray_triangle, Aabb, RayHit};
use super::{TriMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

/// Closest point on the indexed triangle set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestHit {
    pub point: Vec3,
    pub distance: f64,
    pub face: usize,
}

/// Immutable spatial index over a mesh's triangles. Owns a copy of the triangle
/// vertices so it does not borrow the mesh.
#[derive(Clone, Debug)]
pub struct MeshIndex {
    triangles: Vec<[Vec3; 3]>,
    /// `order[k]` is the original face id of the k-th triangle in leaf order.
    order: Vec<u32>,
    nodes: Vec<Node>,
    watertight: bool,
}

impl MeshIndex {
    pub fn new(mesh: &TriMesh) -> Self {
        let triangles: Vec<[Vec3; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        build(&triangles, &centroids, &mut order, 0, triangles.len(), &mut nodes);
        let sorted: Vec<[Vec3; 3]> = order.iter().map(|&i| triangles[i as usize]).collect();
        Self {
            triangles: sorted,
            order,
            nodes,
            watertight: mesh.is_watertight(),
        }
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Exact closest point on the triangle set. Ties resolve to the lowest face id.
    pub fn nearest(&self, query: &Vec3) -> NearestHit {
        let mut best = NearestHit {
            point: *query,
            distance: f64::INFINITY,
            face: usize::MAX,
        };
        let mut best_d2 = f64::INFINITY;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance_squared(query)));
        while let Some((idx, box_d2)) = stack.pop() {
            if box_d2 > best_d2 {
                continue;
            }
            match self.nodes[idx as usize].kind {
                NodeKind::Leaf { start, count } => {
                    for k in start..start + count {
                        let t = &self.triangles[k as usize];
                        let c = closest_point_on_triangle(query, &t[0], &t[1], &t[2]);
                        let d2 = (c - query).norm_squared();
                        let face = self.order[k as usize] as usize;
                        if d2 < best_d2 || (d2 == best_d2 && face < best.face) {
                            best_d2 = d2;
                            best = NearestHit {
                                point: c,
                                distance: 0.0,
                                face,
                            };
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left as usize].bounds.distance_squared(query);
                    let dr = self.nodes[right as usize].bounds.distance_squared(query);
                    // Push the farther child first so the nearer one is explored first.
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best.distance = best_d2.sqrt();
        best
    }

    /// Ray parameters of all crossings with `t > 0`, or `None` if any hit is ambiguous.
    pub fn ray_crossings(&self, origin: &Vec3, dir: &Vec3) -> Option<Vec<f64>> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut hits = Vec::new();
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            if node.bounds.ray_entry(origin, &inv).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for k in start..start + count {
                        match ray_triangle(origin, dir, &self.triangles[k as usize]) {
                            RayHit::Miss => {}
                            RayHit::Hit(t) => hits.push(t),
                            RayHit::Ambiguous => return None,
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        hits.sort_by(f64::total_cmp);
        Some(hits)
    }

    /// Ray-parity inside test. Meaningful only for watertight meshes; retries with
    /// alternative directions when a ray grazes an edge or lies in a face plane.
    pub fn contains(&self, p: &Vec3) -> bool {
        for dir in PROBE_DIRECTIONS.iter() {
            let dir = Vec3::from(*dir);
            if let Some(hits) = self.ray_crossings(p, &dir) {
                return hits.len() % 2 == 1;
            }
        }
        false
    }

    /// Signed distance to the surface, negative inside (requires a watertight mesh
    /// for the sign to be meaningful).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let d = self.nearest(p).distance;
        if d > 0.0 && self.contains(p) {
            -d
        } else {
            d
        }
    }
}

// Fixed, deliberately irregular directions; deterministic retries.
const PROBE_DIRECTIONS: [[f64; 3]; 8] = [
    [0.5773502691896258, 0.5773502691896257, 0.5773502691896258],
    [0.2672612419124244, -0.5345224838248488, 0.8017837257372732],
    [-0.8728715609439696, 0.2182178902359924, 0.4364357804719848],
    [0.1230914909793327, 0.9847319278346618, -0.1230914909793327],
    [-0.3015113445777636, -0.3015113445777636, -0.9045340337332909],
    [0.9363291775690445, 0.1170411471961306, -0.3315125852393037],
    [-0.1825741858350554, 0.3651483716701107, -0.9128709291752769],
    [0.6859943405700353, -0.6859943405700353, 0.2425356250363330],
];

fn build(
    triangles: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in &order[start..end] {
        for v in &triangles[i as usize] {
            bounds.grow(v);
        }
        cbounds.grow(&centroids[i as usize]);
    }
    let idx = nodes.len() as u32;
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf {
                start: start as u32,
                count: count as u32,
            },
        });
        return idx;
    }
    let ext = cbounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node {
        bounds,
        kind: NodeKind::Leaf { start: 0, count: 0 },
    });
    let left = build(triangles, centroids, order, start, mid, nodes);
    let right = build(triangles, centroids, order, mid, end, nodes);
    nodes[idx as usize].kind = NodeKind::Inner { left, right };
    idx
}
