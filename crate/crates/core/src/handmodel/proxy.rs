//! Capsule-and-slab surface standing in for a full hand mesh.
//!
//! Each of the 20 phalanges is a capsule around its segment; the palm is the convex
//! hull of the wrist and five knuckles, extruded symmetrically by the palm thickness.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geom::{point_segment_distance, Vec2, Vec3};

use super::skeleton::{HandSkeleton, PALM_JOINTS, PALM_PART, PHALANGE_COUNT};
use super::HandModelError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyConfig {
    /// Capsule radius by phalange level: wrist→knuckle, proximal, middle, distal.
    pub radii: [f64; 4],
    pub palm_thickness: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            radii: [0.010, 0.009, 0.008, 0.007],
            palm_thickness: 0.025,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    #[inline]
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        point_segment_distance(p, &self.a, &self.b).0 - self.radius
    }

    /// Closest point on the capsule surface and its outward normal.
    pub fn closest_surface_point(&self, p: &Vec3) -> (Vec3, Vec3) {
        let (d, c) = point_segment_distance(p, &self.a, &self.b);
        let dir = if d > 0.0 {
            (p - c) / d
        } else {
            any_perpendicular(&(self.b - self.a))
        };
        (c + dir * self.radius, dir)
    }
}

fn any_perpendicular(v: &Vec3) -> Vec3 {
    let v = v.try_normalize(0.0).unwrap_or_else(Vec3::z);
    let helper = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&helper).normalize()
}

/// Convex prism: a polygon in the plane `(u, v)` through `origin`, extruded by
/// `±half_thickness` along `normal`.
#[derive(Clone, Debug, PartialEq)]
pub struct PalmSlab {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub normal: Vec3,
    /// Counter-clockwise hull vertices in `(u, v)` coordinates.
    pub polygon: Vec<Vec2>,
    pub half_thickness: f64,
}

impl PalmSlab {
    fn local(&self, p: &Vec3) -> (Vec2, f64) {
        let d = p - self.origin;
        (Vec2::new(d.dot(&self.u), d.dot(&self.v)), d.dot(&self.normal))
    }

    fn world(&self, q: &Vec2, w: f64) -> Vec3 {
        self.origin + self.u * q.x + self.v * q.y + self.normal * w
    }

    /// Signed 2D distance to the polygon boundary (negative inside) and the closest boundary point.
    fn polygon_distance(&self, q: &Vec2) -> (f64, Vec2) {
        let n = self.polygon.len();
        let mut best = f64::INFINITY;
        let mut closest = *q;
        let mut inside = true;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            let e = b - a;
            let t = ((q - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
            let c = a + e * t;
            let d = (q - c).norm();
            if d < best {
                best = d;
                closest = c;
            }
            if e.x * (q.y - a.y) - e.y * (q.x - a.x) < 0.0 {
                inside = false;
            }
        }
        (if inside { -best } else { best }, closest)
    }

    /// Distance from `p` to the flat mid-plane polygon (the palm's "skeleton").
    pub fn midplane_distance(&self, p: &Vec3) -> f64 {
        let (q, w) = self.local(p);
        let (d2, _) = self.polygon_distance(&q);
        (d2.max(0.0).powi(2) + w * w).sqrt()
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let (q, w) = self.local(p);
        let (d2, _) = self.polygon_distance(&q);
        let dz = w.abs() - self.half_thickness;
        (d2.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt() + d2.max(dz).min(0.0)
    }

    /// Closest point on the prism surface and the outward normal there.
    pub fn closest_surface_point(&self, p: &Vec3) -> (Vec3, Vec3) {
        let (q, w) = self.local(p);
        let (d2, edge_pt) = self.polygon_distance(&q);
        let h = self.half_thickness;
        let dz = w.abs() - h;
        let side_sign = if w >= 0.0 { 1.0 } else { -1.0 };
        if d2 > 0.0 || dz > 0.0 {
            let q_c = if d2 > 0.0 { edge_pt } else { q };
            let w_c = w.clamp(-h, h);
            let c = self.world(&q_c, w_c);
            let n = (p - c).try_normalize(0.0).unwrap_or(self.normal * side_sign);
            (c, n)
        } else if -dz <= -d2 {
            // Nearer to a cap face.
            (self.world(&q, h * side_sign), self.normal * side_sign)
        } else {
            let c = self.world(&edge_pt, w);
            let dir2 = (edge_pt - q).try_normalize(0.0).unwrap_or(Vec2::x());
            (c, self.u * dir2.x + self.v * dir2.y)
        }
    }
}

/// Result of a proxy query: the nearest primitive and its surface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxyQuery {
    pub signed_distance: f64,
    pub closest_point: Vec3,
    pub normal: Vec3,
    /// Phalange id `0..20`, or [`PALM_PART`].
    pub part: usize,
}

/// A point on the union surface of the proxy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxySurfacePoint {
    pub position: Vec3,
    pub normal: Vec3,
    pub part: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HandProxy {
    pub capsules: [Capsule; PHALANGE_COUNT],
    pub palm: PalmSlab,
}

impl HandProxy {
    pub fn from_skeleton(skeleton: &HandSkeleton, config: &ProxyConfig) -> Result<Self, HandModelError> {
        if config.radii.iter().any(|&r| !(r > 0.0)) || !(config.palm_thickness > 0.0) {
            return Err(HandModelError::InvalidProxyConfig);
        }
        let capsules = std::array::from_fn(|i| {
            let (a, b) = skeleton.segment(i);
            Capsule {
                a,
                b,
                radius: config.radii[i % 4],
            }
        });
        let palm = palm_slab(skeleton, config.palm_thickness / 2.0)?;
        Ok(Self { capsules, palm })
    }

    pub fn part_signed_distance(&self, p: &Vec3, part: usize) -> f64 {
        if part == PALM_PART {
            self.palm.signed_distance(p)
        } else {
            self.capsules[part].signed_distance(p)
        }
    }

    /// Minimum over all primitives; ties resolve to the lowest part id.
    pub fn query(&self, p: &Vec3) -> ProxyQuery {
        let mut best_part = 0;
        let mut best = f64::INFINITY;
        for part in 0..=PALM_PART {
            let d = self.part_signed_distance(p, part);
            if d < best {
                best = d;
                best_part = part;
            }
        }
        let (closest_point, normal) = if best_part == PALM_PART {
            self.palm.closest_surface_point(p)
        } else {
            self.capsules[best_part].closest_surface_point(p)
        };
        ProxyQuery {
            signed_distance: best,
            closest_point,
            normal,
            part: best_part,
        }
    }

    /// Deterministic sampling of the union surface with roughly `spacing` meters between
    /// neighbouring points. Points buried inside another primitive are dropped.
    pub fn surface_points(&self, spacing: f64) -> Vec<ProxySurfacePoint> {
        let mut out = Vec::new();
        for (part, cap) in self.capsules.iter().enumerate() {
            for (position, normal) in capsule_surface(cap, spacing) {
                out.push(ProxySurfacePoint { position, normal, part });
            }
        }
        for (position, normal) in slab_surface(&self.palm, spacing) {
            out.push(ProxySurfacePoint {
                position,
                normal,
                part: PALM_PART,
            });
        }
        let tol = 1e-9;
        out.retain(|s| {
            (0..=PALM_PART)
                .filter(|&k| k != s.part)
                .all(|k| self.part_signed_distance(&s.position, k) >= -tol)
        });
        out
    }
}

/// Signed distance to the proxy (meters, negative inside).
pub fn proxy_signed_distance(proxy: &HandProxy, p: &Vec3) -> f64 {
    let mut best = proxy.palm.signed_distance(p);
    for c in &proxy.capsules {
        best = best.min(c.signed_distance(p));
    }
    best
}

fn palm_slab(skeleton: &HandSkeleton, half_thickness: f64) -> Result<PalmSlab, HandModelError> {
    let pts: Vec<Vec3> = PALM_JOINTS.iter().map(|&j| skeleton.joint(j)).collect();
    let origin = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let mut cov = nalgebra::Matrix3::zeros();
    for p in &pts {
        let d = p - origin;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let u: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    let normal_raw: Vec3 = eig.eigenvectors.column(order[2]).into_owned();
    // Orient the frame so that u × v = normal.
    let v = normal_raw.cross(&u).normalize();
    let normal = u.cross(&v);
    let projected: Vec<Vec2> = pts
        .iter()
        .map(|p| Vec2::new((p - origin).dot(&u), (p - origin).dot(&v)))
        .collect();
    let polygon = convex_hull(&projected);
    let area: f64 = (0..polygon.len())
        .map(|i| {
            let a = polygon[i];
            let b = polygon[(i + 1) % polygon.len()];
            a.x * b.y - a.y * b.x
        })
        .sum::<f64>()
        / 2.0;
    if polygon.len() < 3 || area < 1e-8 {
        return Err(HandModelError::DegeneratePalm);
    }
    Ok(PalmSlab {
        origin,
        u,
        v,
        normal,
        polygon,
        half_thickness,
    })
}

/// Andrew's monotone chain; counter-clockwise, collinear points removed.
fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vec2, a: &Vec2, b: &Vec2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Vec2> = Vec::with_capacity(pts.len() * 2);
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    // The upper chain may not pop into the finished lower chain.
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

fn capsule_surface(cap: &Capsule, spacing: f64) -> Vec<(Vec3, Vec3)> {
    let axis = cap.b - cap.a;
    let len = axis.norm();
    let dir = if len > 0.0 { axis / len } else { Vec3::z() };
    let e1 = any_perpendicular(&dir);
    let e2 = dir.cross(&e1);
    let r = cap.radius;
    let mut out = Vec::new();
    let around = ((2.0 * PI * r / spacing).ceil() as usize).max(8);
    let rings = (len / spacing).ceil() as usize;
    for i in 0..=rings {
        let t = if rings == 0 { 0.0 } else { i as f64 / rings as f64 };
        let c = cap.a + axis * t;
        for k in 0..around {
            let phi = 2.0 * PI * (k as f64 + 0.5 * (i % 2) as f64) / around as f64;
            let n = e1 * phi.cos() + e2 * phi.sin();
            out.push((c + n * r, n));
        }
    }
    // Hemispherical caps from a Fibonacci sphere, split by the axis direction.
    let count = ((4.0 * PI * r * r) / (spacing * spacing)).ceil() as usize;
    let count = count.max(16);
    let golden = PI * (3.0 - 5f64.sqrt());
    for i in 0..count {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
        let rad = (1.0 - z * z).sqrt();
        let theta = golden * i as f64;
        let n = dir * z + e1 * (rad * theta.cos()) + e2 * (rad * theta.sin());
        if z > 0.0 {
            out.push((cap.b + n * r, n));
        } else if z < 0.0 {
            out.push((cap.a + n * r, n));
        }
    }
    // Poles, so the extreme tip points are always represented.
    out.push((cap.b + dir * r, dir));
    out.push((cap.a - dir * r, -dir));
    out
}

fn slab_surface(slab: &PalmSlab, spacing: f64) -> Vec<(Vec3, Vec3)> {
    let mut out = Vec::new();
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    for q in &slab.polygon {
        lo = lo.inf(q);
        hi = hi.sup(q);
    }
    let nx = ((hi.x - lo.x) / spacing).ceil() as usize;
    let ny = ((hi.y - lo.y) / spacing).ceil() as usize;
    for i in 0..=nx {
        for j in 0..=ny {
            let q = Vec2::new(lo.x + i as f64 * spacing, lo.y + j as f64 * spacing);
            if slab.polygon_distance(&q).0 <= 0.0 {
                for s in [1.0, -1.0] {
                    out.push((slab.world(&q, s * slab.half_thickness), slab.normal * s));
                }
            }
        }
    }
    let n = slab.polygon.len();
    let layers = ((2.0 * slab.half_thickness) / spacing).ceil() as usize;
    for e in 0..n {
        let a = slab.polygon[e];
        let b = slab.polygon[(e + 1) % n];
        let edge = b - a;
        let outward2 = Vec2::new(edge.y, -edge.x).normalize();
        let outward = slab.u * outward2.x + slab.v * outward2.y;
        let steps = (edge.norm() / spacing).ceil() as usize;
        for s in 0..steps {
            let q = a + edge * (s as f64 / steps as f64);
            for l in 0..=layers {
                let w = -slab.half_thickness + 2.0 * slab.half_thickness * l as f64 / layers as f64;
                out.push((slab.world(&q, w), outward));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handmodel::{rest_skeleton, Handedness};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn proxy() -> HandProxy {
        HandProxy::from_skeleton(&rest_skeleton(Handedness::Right), &ProxyConfig::default()).unwrap()
    }

    #[test]
    fn hull_contains_every_input_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let pts: Vec<Vec2> = (0..6)
                .map(|_| Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let hull = convex_hull(&pts);
            let n = hull.len();
            for p in &pts {
                for i in 0..n {
                    let (a, b) = (hull[i], hull[(i + 1) % n]);
                    let c = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
                    assert!(c >= -1e-12, "{p:?} outside hull {hull:?}");
                }
            }
        }
    }

    #[test]
    fn point_on_capsule_axis_is_minus_radius() {
        let cap = Capsule {
            a: Vec3::zeros(),
            b: Vec3::new(0.0, 0.05, 0.0),
            radius: 0.008,
        };
        assert!((cap.signed_distance(&Vec3::new(0.0, 0.02, 0.0)) + 0.008).abs() < 1e-15);
        let d = 0.003;
        assert!((cap.signed_distance(&Vec3::new(0.008 + d, 0.025, 0.0)) - d).abs() < 1e-15);
    }

    #[test]
    fn proxy_on_phalange_axis() {
        let p = proxy();
        let cap = p.capsules[7];
        let mid = (cap.a + cap.b) / 2.0;
        // The distal capsule is the smallest primitive containing its midpoint.
        assert!((proxy_signed_distance(&p, &mid) + cap.radius).abs() < 1e-12);
        let q = p.query(&mid);
        assert_eq!(q.part, 7);
    }

    #[test]
    fn matches_surface_sampling_outside() {
        let p = proxy();
        let samples = p.surface_points(0.0005);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 200 {
            let q = Vec3::new(
                rng.random_range(-0.08..0.08),
                rng.random_range(-0.03..0.2),
                rng.random_range(-0.05..0.05),
            );
            let d = proxy_signed_distance(&p, &q);
            if d <= 0.0 {
                continue;
            }
            let oracle = samples.iter().map(|s| (s.position - q).norm()).fold(f64::INFINITY, f64::min);
            assert!((d - oracle).abs() < 1e-3, "{d} vs {oracle}");
            assert!(d <= oracle + 1e-12);
            checked += 1;
        }
    }

    #[test]
    fn surface_points_lie_on_the_union_surface() {
        let p = proxy();
        for s in p.surface_points(0.002) {
            assert!(proxy_signed_distance(&p, &s.position).abs() < 1e-9);
            assert!((s.normal.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn slab_closest_point_is_on_surface() {
        let p = proxy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let q = p.palm.origin
                + Vec3::new(
                    rng.random_range(-0.06..0.06),
                    rng.random_range(-0.06..0.06),
                    rng.random_range(-0.04..0.04),
                );
            let (c, _) = p.palm.closest_surface_point(&q);
            assert!(p.palm.signed_distance(&c).abs() < 1e-12);
            assert!(((q - c).norm() - p.palm.signed_distance(&q).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn proxy_is_one_lipschitz() {
        let p = proxy();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let a = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.2), rng.random_range(-0.06..0.06));
            let b = a + Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
            let da = proxy_signed_distance(&p, &a);
            let db = proxy_signed_distance(&p, &b);
            assert!((da - db).abs() <= (a - b).norm() + 1e-12);
        }
    }
}
