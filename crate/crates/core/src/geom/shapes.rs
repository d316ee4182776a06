//! Closed parametric meshes with outward-facing counter-clockwise winding.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{TriMesh, Vec3};

/// Unit cube `[0,1]³`, two triangles per face. Every face diagonal passes through
/// `(0,0,0)` or `(1,1,1)`, which makes those two corners symmetric.
pub fn unit_cube() -> TriMesh {
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads: [[u32; 4]; 6] = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        let on_diag = |v: u32| v == 0 || v == 7;
        if on_diag(q[0]) || on_diag(q[2]) {
            faces.push([q[0], q[1], q[2]]);
            faces.push([q[0], q[2], q[3]]);
        } else {
            faces.push([q[1], q[2], q[3]]);
            faces.push([q[1], q[3], q[0]]);
        }
    }
    TriMesh::new(vertices, faces).expect("static cube")
}

/// Square `[0,size]²` in the z=0 plane, `n×n` cells, normal +z. Not closed.
pub fn grid_square(size: f64, n: usize) -> TriMesh {
    let n = n.max(1);
    let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec3::new(size * i as f64 / n as f64, size * j as f64 / n as f64, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, faces).expect("grid square")
}

/// Subdivided icosahedron of the given radius centered at the origin.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    subdivide_on_sphere(&mut vertices, &mut faces, subdivisions);
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriMesh::new(vertices, faces).expect("icosphere")
}

/// Subdivided octahedron projected onto a sphere. Each face stays inside one octant.
pub fn octasphere(radius: f64, subdivisions: usize) -> TriMesh {
    let mut vertices = vec![
        Vec3::x(),
        -Vec3::x(),
        Vec3::y(),
        -Vec3::y(),
        Vec3::z(),
        -Vec3::z(),
    ];
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for (sx, x) in [(1.0, 0u32), (-1.0, 1)] {
        for (sy, y) in [(1.0, 2u32), (-1.0, 3)] {
            for (sz, z) in [(1.0, 4u32), (-1.0, 5)] {
                // Orientation flips with each negative axis.
                if sx * sy * sz > 0.0 {
                    faces.push([x, y, z]);
                } else {
                    faces.push([x, z, y]);
                }
            }
        }
    }
    subdivide_on_sphere(&mut vertices, &mut faces, subdivisions);
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriMesh::new(vertices, faces).expect("octasphere")
}

fn subdivide_on_sphere(vertices: &mut Vec<Vec3>, faces: &mut Vec<[u32; 3]>, levels: usize) {
    for _ in 0..levels {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize());
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in faces.iter() {
            let ab = midpoint(a, b, vertices);
            let bc = midpoint(b, c, vertices);
            let ca = midpoint(c, a, vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        *faces = next;
    }
}

/// Axis-aligned box centered at the origin with `n` subdivisions per edge.
pub fn subdivided_box(extents: Vec3, n: usize) -> TriMesh {
    let n = n.max(1) as i64;
    let mut index: HashMap<(i64, i64, i64), u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |key: (i64, i64, i64), vertices: &mut Vec<Vec3>| -> u32 {
        *index.entry(key).or_insert_with(|| {
            let p = Vec3::new(
                (key.0 as f64 / n as f64 - 0.5) * extents.x,
                (key.1 as f64 / n as f64 - 0.5) * extents.y,
                (key.2 as f64 / n as f64 - 0.5) * extents.z,
            );
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };
    let mut faces = Vec::new();
    // For each axis and side, (u, v) span the face so that u × v points outward.
    for axis in 0..3usize {
        for side in [0i64, n] {
            let (ua, va) = if side == n {
                ((axis + 1) % 3, (axis + 2) % 3)
            } else {
                ((axis + 2) % 3, (axis + 1) % 3)
            };
            let key = |u: i64, v: i64| {
                let mut k = [0i64; 3];
                k[axis] = side;
                k[ua] = u;
                k[va] = v;
                (k[0], k[1], k[2])
            };
            for u in 0..n {
                for v in 0..n {
                    let a = vid(key(u, v), &mut vertices);
                    let b = vid(key(u + 1, v), &mut vertices);
                    let c = vid(key(u + 1, v + 1), &mut vertices);
                    let d = vid(key(u, v + 1), &mut vertices);
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                }
            }
        }
    }
    TriMesh::new(vertices, faces).expect("box")
}

/// Closed cylinder along z, centered at the origin.
pub fn cylinder(radius: f64, height: f64, segments: usize, rings: usize, cap_rings: usize) -> TriMesh {
    let segments = segments.max(3);
    let rings = rings.max(1);
    let cap_rings = cap_rings.max(1);
    let mut vertices = Vec::new();
    let ring_start = |r: usize| (r * segments) as u32;
    for r in 0..=rings {
        let z = -height / 2.0 + height * r as f64 / rings as f64;
        for s in 0..segments {
            let a = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let mut faces = Vec::new();
    for r in 0..rings {
        for s in 0..segments {
            let s1 = (s + 1) % segments;
            let a = ring_start(r) + s as u32;
            let b = ring_start(r) + s1 as u32;
            let c = ring_start(r + 1) + s1 as u32;
            let d = ring_start(r + 1) + s as u32;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    // Caps: concentric rings down to a center vertex. Outer ring is the side boundary.
    for (boundary_ring, z, outward_up) in [(rings, height / 2.0, true), (0, -height / 2.0, false)] {
        let mut prev: Vec<u32> = (0..segments).map(|s| ring_start(boundary_ring) + s as u32).collect();
        for c in 1..cap_rings {
            let rad = radius * (1.0 - c as f64 / cap_rings as f64);
            let start = vertices.len() as u32;
            for s in 0..segments {
                let a = 2.0 * PI * s as f64 / segments as f64;
                vertices.push(Vec3::new(rad * a.cos(), rad * a.sin(), z));
            }
            let cur: Vec<u32> = (0..segments as u32).map(|s| start + s).collect();
            for s in 0..segments {
                let s1 = (s + 1) % segments;
                let (a, b, c, d) = (prev[s], prev[s1], cur[s1], cur[s]);
                if outward_up {
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                } else {
                    faces.push([a, c, b]);
                    faces.push([a, d, c]);
                }
            }
            prev = cur;
        }
        vertices.push(Vec3::new(0.0, 0.0, z));
        let center = (vertices.len() - 1) as u32;
        for s in 0..segments {
            let s1 = (s + 1) % segments;
            if outward_up {
                faces.push([prev[s], prev[s1], center]);
            } else {
                faces.push([prev[s1], prev[s], center]);
            }
        }
    }
    TriMesh::new(vertices, faces).expect("cylinder")
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, major_segments: usize, minor_segments: usize) -> TriMesh {
    let (nu, nv) = (major_segments.max(3), minor_segments.max(3));
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| ((i % nu) * nv + (j % nv)) as u32;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, faces).expect("torus")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_closed_outward(mesh: &TriMesh, volume: f64, rel: f64) {
        assert!(mesh.is_watertight());
        let v = mesh.signed_volume();
        assert!(v > 0.0, "inward winding");
        assert!((v - volume).abs() / volume < rel, "volume {v} vs {volume}");
    }

    #[test]
    fn shapes_are_closed_and_outward() {
        check_closed_outward(&unit_cube(), 1.0, 1e-12);
        check_closed_outward(&icosphere(1.0, 3), 4.0 / 3.0 * PI, 0.02);
        check_closed_outward(&octasphere(1.0, 4), 4.0 / 3.0 * PI, 0.02);
        check_closed_outward(&subdivided_box(Vec3::new(0.1, 0.2, 0.3), 5), 0.006, 1e-9);
        check_closed_outward(&cylinder(0.03, 0.1, 48, 6, 3), PI * 0.03f64.powi(2) * 0.1, 0.01);
        check_closed_outward(&torus(0.05, 0.015, 64, 32), 2.0 * PI * PI * 0.05 * 0.015f64.powi(2), 0.01);
        assert!(!grid_square(1.0, 3).is_watertight());
    }
}
