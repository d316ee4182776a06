use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contact::ContactMap;
use crate::geom::{sample_surface, MeshIndex, RigidTransform, TriMesh, Vec3};
use crate::handmodel::{
    forward_kinematics, proxy_signed_distance, HandProxy, HandSkeleton, Handedness, KinematicHand, ProxyConfig,
    DISTAL_PHALANGES, FLEXION_LIMITS, PALM_JOINTS, PALM_PART,
};

use super::{sub_seed, SynthError, SynthScenario};

const MAX_ATTEMPTS: usize = 64;
/// Fingertips closer than this to the surface count as touching (meters).
const TOUCH_TOLERANCE: f64 = 5e-4;
const MIN_TOUCHING_TIPS: usize = 3;
const SEGMENT_SAMPLES: usize = 12;
const FLEXION_STEP: f64 = 2.0 * std::f64::consts::PI / 180.0;
/// Minimum distance between the anchor points of two hands (meters).
const HAND_SEPARATION: f64 = 0.08;

#[derive(Clone, Debug)]
pub struct GraspPlacement {
    pub hands: Vec<KinematicHand>,
    pub skeletons: Vec<HandSkeleton>,
    /// Fingers (0 = thumb) whose distal phalange touches the object, per hand.
    pub touching_tips: Vec<Vec<usize>>,
}

/// Per mesh vertex: `clamp((d0 - s) / d0, 0, 1)` with `s` the signed distance to the
/// nearest hand proxy.
pub fn contact_from_proxies(mesh: &TriMesh, proxies: &[HandProxy], falloff: f64) -> ContactMap {
    let values = mesh
        .vertices()
        .par_iter()
        .map(|v| {
            let s = proxies.iter().map(|p| proxy_signed_distance(p, v)).fold(f64::INFINITY, f64::min);
            ((falloff - s) / falloff).clamp(0.0, 1.0)
        })
        .collect();
    ContactMap::new(values).expect("clamped values are in range")
}

/// Minimum object signed distance over a capsule, sampled along its axis.
fn capsule_clearance(index: &MeshIndex, a: &Vec3, b: &Vec3, radius: f64) -> f64 {
    (0..=SEGMENT_SAMPLES)
        .map(|i| index.signed_distance(&(a + (b - a) * (i as f64 / SEGMENT_SAMPLES as f64))))
        .fold(f64::INFINITY, f64::min)
        - radius
}

/// Clearance of the parts that do not move with flexion: palm slab and the wrist-to-knuckle capsules.
fn static_clearance(index: &MeshIndex, proxy: &HandProxy) -> f64 {
    let mut m = f64::INFINITY;
    for s in proxy.surface_points(0.004) {
        if s.part == PALM_PART {
            m = m.min(index.signed_distance(&s.position));
        }
    }
    for f in 0..5 {
        let c = &proxy.capsules[4 * f];
        m = m.min(capsule_clearance(index, &c.a, &c.b, c.radius));
    }
    m
}

fn finger_clearance(index: &MeshIndex, proxy: &HandProxy, finger: usize) -> (f64, f64) {
    let mut moving = f64::INFINITY;
    for k in 1..4 {
        let c = &proxy.capsules[4 * finger + k];
        moving = moving.min(capsule_clearance(index, &c.a, &c.b, c.radius));
    }
    let tip = &proxy.capsules[DISTAL_PHALANGES[finger]];
    (moving, capsule_clearance(index, &tip.a, &tip.b, tip.radius))
}

fn proxy_of(hand: &KinematicHand) -> Result<HandProxy, SynthError> {
    Ok(HandProxy::from_skeleton(&forward_kinematics(hand)?, &ProxyConfig::default())?)
}

fn set_flexion(hand: &mut KinematicHand, finger: usize, theta: f64) {
    hand.pose[finger].flexion = [theta; 3];
}

/// Closes one finger until its first moving phalange meets the surface. Returns whether
/// the distal phalange then touches, or `None` if the finger penetrates even when fully
/// extended.
fn close_finger(index: &MeshIndex, hand: &mut KinematicHand, finger: usize) -> Result<Option<bool>, SynthError> {
    let (lo, hi) = FLEXION_LIMITS;
    let penetrates = |hand: &mut KinematicHand, theta: f64| -> Result<(bool, f64), SynthError> {
        set_flexion(hand, finger, theta);
        let (moving, tip) = finger_clearance(index, &proxy_of(hand)?, finger);
        Ok((moving <= 0.0, tip))
    };
    if penetrates(hand, lo)?.0 {
        return Ok(None);
    }
    let mut prev = lo;
    let mut theta = lo;
    let mut hit = false;
    while theta < hi {
        theta = (theta + FLEXION_STEP).min(hi);
        if penetrates(hand, theta)?.0 {
            hit = true;
            break;
        }
        prev = theta;
    }
    if !hit {
        let (_, tip) = penetrates(hand, hi)?;
        return Ok(Some(tip <= TOUCH_TOLERANCE));
    }
    let (mut a, mut b) = (prev, theta);
    for _ in 0..40 {
        let mid = 0.5 * (a + b);
        if penetrates(hand, mid)?.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    let (_, tip) = penetrates(hand, a)?;
    Ok(Some(tip <= TOUCH_TOLERANCE))
}

/// Surface point whose tangent plane has the whole mesh on one side.
fn supporting_point(mesh: &TriMesh, rng: &mut ChaCha8Rng) -> Option<(Vec3, Vec3)> {
    let tol = 1e-4;
    for _ in 0..32 {
        let cloud = sample_surface(mesh, 1, rng.random()).ok()?;
        let (p, n) = (cloud.points[0], cloud.normals[0]);
        if mesh.vertices().iter().all(|v| (v - p).dot(&n) <= tol) {
            return Some((p, n));
        }
    }
    None
}

fn try_place(
    scenario: &SynthScenario,
    mesh: &TriMesh,
    index: &MeshIndex,
    handedness: Handedness,
    avoid: &[Vec3],
    rng: &mut ChaCha8Rng,
) -> Result<Option<(KinematicHand, Vec<usize>, Vec3)>, SynthError> {
    let Some((p, n)) = supporting_point(mesh, rng) else {
        return Ok(None);
    };
    if avoid.iter().any(|q| (p - q).norm() < HAND_SEPARATION) {
        return Ok(None);
    }
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t0 = n.cross(&helper).normalize();
    let twist = rng.random_range(0.0..std::f64::consts::TAU);
    let y = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(n), twist) * t0;
    let x = y.cross(&n);
    let rotation = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, n]));

    let mut hand = KinematicHand::rest(handedness);
    hand.shape.global = rng.random_range(0.9..1.1);
    for s in &mut hand.shape.fingers {
        *s = rng.random_range(0.95..1.05);
    }
    for f in &mut hand.pose {
        f.abduction = rng.random_range(-0.15..0.15);
        f.flexion = [FLEXION_LIMITS.0; 3];
    }
    let local = forward_kinematics(&hand)?;
    let palm_center = PALM_JOINTS.iter().map(|&j| local.joint(j)).sum::<Vec3>() / PALM_JOINTS.len() as f64;
    let gap = rng.random_range(scenario.palm_gap[0]..=scenario.palm_gap[1]);
    let mut translation = p + n * gap - rotation * palm_center;
    for _ in 0..4 {
        hand.root = RigidTransform::from_parts(rotation, translation);
        let m = static_clearance(index, &proxy_of(&hand)?);
        if (m - gap).abs() < 1e-5 {
            break;
        }
        translation += n * (gap - m);
    }
    hand.root = RigidTransform::from_parts(rotation, translation);
    if static_clearance(index, &proxy_of(&hand)?) < 0.0 {
        return Ok(None);
    }
    let mut touching = Vec::new();
    for f in 0..5 {
        match close_finger(index, &mut hand, f)? {
            None => return Ok(None),
            Some(true) => touching.push(f),
            Some(false) => {}
        }
    }
    if touching.len() < MIN_TOUCHING_TIPS {
        return Ok(None);
    }
    Ok(Some((hand, touching, p)))
}

/// Places one or two hands on the object and closes their fingers until at least three
/// fingertips rest on the surface.
pub fn place_hands(scenario: &SynthScenario, mesh: &TriMesh, index: &MeshIndex) -> Result<GraspPlacement, SynthError> {
    let mut out = GraspPlacement {
        hands: Vec::new(),
        skeletons: Vec::new(),
        touching_tips: Vec::new(),
    };
    let mut anchors = Vec::new();
    for h in 0..scenario.hands {
        let handedness = if h == 0 { Handedness::Right } else { Handedness::Left };
        let mut placed = None;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(scenario.seed, 1000 * (h as u64 + 1) + attempt as u64));
            if let Some(found) = try_place(scenario, mesh, index, handedness, &anchors, &mut rng)? {
                placed = Some(found);
                break;
            }
        }
        let (hand, touching, anchor) = placed.ok_or(SynthError::Infeasible { attempts: MAX_ATTEMPTS })?;
        anchors.push(anchor);
        out.skeletons.push(forward_kinematics(&hand)?);
        out.hands.push(hand);
        out.touching_tips.push(touching);
    }
    Ok(out)
}
