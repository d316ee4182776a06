use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Rotation3, Unit};

use crate::geom::Vec3;
use crate::handmodel::{HandSkeleton, JOINT_COUNT, MIDDLE_KNUCKLE, PALM_JOINTS, WRIST};

use super::{AnalysisError, GraspSet, Intent};

/// Wrist-to-middle-knuckle distance after normalization (meters).
pub const REFERENCE_HAND_SIZE: f64 = 0.1;

/// Rotational symmetry about `axis` (through the object-frame origin); the palm joints are
/// rotated about it onto `reference`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryAlignment {
    pub axis: Vec3,
    pub reference: [Vec3; 6],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedSkeleton {
    pub skeleton: HandSkeleton,
    pub scale: f64,
    /// Rotation applied about the symmetry axis (radians, right-handed).
    pub angle: f64,
}

/// Scales about the object origin to the reference hand size, then for symmetric objects
/// rotates about the axis to best match the reference palm joints in least squares.
pub fn normalize_and_align(
    skeleton: &HandSkeleton,
    symmetry: Option<&SymmetryAlignment>,
) -> Result<AlignedSkeleton, AnalysisError> {
    let size = (skeleton.joint(MIDDLE_KNUCKLE) - skeleton.joint(WRIST)).norm();
    if !(size > 0.0) {
        return Err(AnalysisError::DegenerateHand);
    }
    let scale = REFERENCE_HAND_SIZE / size;
    let scaled = skeleton.map_joints(|j| j * scale);
    let Some(sym) = symmetry else {
        return Ok(AlignedSkeleton {
            skeleton: scaled,
            scale,
            angle: 0.0,
        });
    };
    let axis = Unit::try_new(sym.axis, 1e-12)
        .filter(|a| a.iter().all(|c| c.is_finite()))
        .ok_or(AnalysisError::InvalidAxis)?;
    let (mut s, mut c) = (0.0, 0.0);
    for (&j, q) in PALM_JOINTS.iter().zip(&sym.reference) {
        let p = scaled.joint(j);
        let p_perp = p - axis.as_ref() * p.dot(&axis);
        c += q.dot(&p_perp);
        s += q.dot(&axis.cross(&p_perp));
    }
    let angle = if s == 0.0 && c == 0.0 { 0.0 } else { s.atan2(c) };
    let r = Rotation3::from_axis_angle(&axis, angle);
    Ok(AlignedSkeleton {
        skeleton: scaled.map_joints(|j| r * j),
        scale,
        angle,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpread {
    pub per_joint: [f64; JOINT_COUNT],
    pub mean: f64,
}

/// Root-mean-square distance of each joint from its mean location.
pub fn joint_stddev(skeletons: &[HandSkeleton]) -> Result<JointSpread, AnalysisError> {
    if skeletons.len() < 2 {
        return Err(AnalysisError::TooFewGrasps {
            needed: 2,
            got: skeletons.len(),
        });
    }
    let n = skeletons.len() as f64;
    let per_joint = std::array::from_fn(|j| {
        let mean = skeletons.iter().map(|s| s.joint(j)).sum::<Vec3>() / n;
        (skeletons.iter().map(|s| (s.joint(j) - mean).norm_squared()).sum::<f64>() / n).sqrt()
    });
    Ok(JointSpread {
        mean: per_joint.iter().sum::<f64>() / JOINT_COUNT as f64,
        per_joint,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSpread {
    pub object: String,
    pub intent: Intent,
    pub grasps: usize,
    pub spread: JointSpread,
}

/// Joint spread per (object, intent) over the first hand of each grasp, after
/// normalization. For objects with a symmetry axis the first grasp of the group (in set
/// order) provides the reference palm. Groups with fewer than two grasps are skipped.
pub fn group_spread(set: &GraspSet) -> Result<Vec<GroupSpread>, AnalysisError> {
    let mut groups: BTreeMap<(String, Intent), Vec<usize>> = BTreeMap::new();
    for (i, g) in set.grasps().iter().enumerate() {
        groups.entry((g.object.clone(), g.intent)).or_default().push(i);
    }
    let mut out = Vec::new();
    for ((object, intent), idx) in groups {
        if idx.len() < 2 {
            continue;
        }
        let first = &set.grasps()[idx[0]];
        let sym = match set.object(first).symmetry_axis {
            Some(axis) => {
                let r = normalize_and_align(&first.hands[0], None)?.skeleton;
                Some(SymmetryAlignment {
                    axis,
                    reference: PALM_JOINTS.map(|j| r.joint(j)),
                })
            }
            None => None,
        };
        let aligned = idx
            .iter()
            .map(|&i| normalize_and_align(&set.grasps()[i].hands[0], sym.as_ref()).map(|a| a.skeleton))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(GroupSpread {
            object,
            intent,
            grasps: idx.len(),
            spread: joint_stddev(&aligned)?,
        });
    }
    Ok(out)
}

/// `object,intent,grasps,mean_std_m,j0..j20`.
pub fn spread_csv(groups: &[GroupSpread]) -> String {
    let mut out = String::from("object,intent,grasps,mean_std_m");
    for j in 0..JOINT_COUNT {
        write!(out, ",j{j}").unwrap();
    }
    out.push('\n');
    for g in groups {
        write!(out, "{},{},{},{:.6}", g.object, g.intent, g.grasps, g.spread.mean).unwrap();
        for v in g.spread.per_joint {
            write!(out, ",{v:.6}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// Cluster id per input, numbered in order of first appearance.
    pub labels: Vec<usize>,
    pub clusters: usize,
    /// Mean L2 distance over all pairs that share a cluster (0 without such pairs).
    pub mean_intra_distance: f64,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Average-linkage agglomerative clustering of flattened joint vectors: the closest pair
/// of clusters merges while their mean pairwise distance is below `threshold`. Ties are
/// broken by the clusters' lexicographically smallest members, so the partition does not
/// depend on input order.
pub fn cluster_poses(poses: &[[f64; 3 * JOINT_COUNT]], threshold: f64) -> Result<Clustering, AnalysisError> {
    if poses.len() < 2 {
        return Err(AnalysisError::TooFewGrasps {
            needed: 2,
            got: poses.len(),
        });
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(AnalysisError::InvalidParameter("threshold must be non-negative".into()));
    }
    let n = poses.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = l2(&poses[i], &poses[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let pairwise = dist.clone();
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    // Representative (smallest member) of each cluster.
    let mut key: Vec<usize> = (0..n).collect();
    loop {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..n {
            if members[i].is_none() {
                continue;
            }
            for j in i + 1..n {
                if members[j].is_none() || !(dist[i][j] < threshold) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj)) => {
                        let order = |a: usize, b: usize| {
                            let (lo, hi) = if lex(&poses[key[a]], &poses[key[b]]).is_le() { (a, b) } else { (b, a) };
                            (key[lo], key[hi])
                        };
                        let (c_lo, c_hi) = order(i, j);
                        let (b_lo, b_hi) = order(bi, bj);
                        dist[i][j]
                            .total_cmp(&dist[bi][bj])
                            .then_with(|| lex(&poses[c_lo], &poses[b_lo]))
                            .then_with(|| lex(&poses[c_hi], &poses[b_hi]))
                            .is_lt()
                    }
                };
                if better {
                    best = Some((i, j));
                }
            }
        }
        let Some((i, j)) = best else { break };
        let (ni, nj) = (members[i].as_ref().unwrap().len() as f64, members[j].as_ref().unwrap().len() as f64);
        for k in 0..n {
            if k != i && k != j && members[k].is_some() {
                let d = (ni * dist[k][i] + nj * dist[k][j]) / (ni + nj);
                dist[k][i] = d;
                dist[i][k] = d;
            }
        }
        let moved = members[j].take().unwrap();
        if lex(&poses[key[j]], &poses[key[i]]).is_lt() {
            key[i] = key[j];
        }
        members[i].as_mut().unwrap().extend(moved);
    }

    let mut cluster_of = vec![0usize; n];
    for (c, m) in members.iter().enumerate() {
        for &p in m.iter().flatten() {
            cluster_of[p] = c;
        }
    }
    let mut relabel = BTreeMap::new();
    let labels: Vec<usize> = cluster_of
        .iter()
        .map(|c| {
            let next = relabel.len();
            *relabel.entry(*c).or_insert(next)
        })
        .collect();
    let (mut sum, mut pairs) = (0.0, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] == labels[j] {
                sum += pairwise[i][j];
                pairs += 1;
            }
        }
    }
    Ok(Clustering {
        clusters: relabel.len(),
        labels,
        mean_intra_distance: if pairs == 0 { 0.0 } else { sum / pairs as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::RigidTransform;
    use crate::handmodel::{forward_kinematics, random_hand, Handedness};
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::collections::BTreeSet;

    fn hand(seed: u64) -> HandSkeleton {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = random_hand(&mut rng, Handedness::Right);
        h.root = RigidTransform::from_axis_angle(
            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            Vec3::new(0.05, -0.02, 0.08),
        );
        forward_kinematics(&h).unwrap()
    }

    fn max_diff(a: &HandSkeleton, b: &HandSkeleton) -> f64 {
        a.joints().iter().zip(b.joints()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn normalized_skeleton_is_unchanged_and_scale_invariant() {
        let h = normalize_and_align(&hand(1), None).unwrap().skeleton;
        assert!(((h.joint(9) - h.joint(0)).norm() - 0.1).abs() < 1e-15);
        let again = normalize_and_align(&h, None).unwrap();
        assert!(max_diff(&again.skeleton, &h) < 1e-15);
        assert!((again.scale - 1.0).abs() < 1e-14);
        let doubled = normalize_and_align(&h.map_joints(|j| j * 2.0), None).unwrap().skeleton;
        assert!(max_diff(&doubled, &h) < 1e-15);
    }

    #[test]
    fn recovers_planted_rotation_about_the_axis() {
        let reference = normalize_and_align(&hand(2), None).unwrap().skeleton;
        let axis = Vec3::new(0.2, -0.3, 1.0).normalize();
        let turned = reference.map_joints(|j| Rotation3::from_axis_angle(&Unit::new_normalize(axis), -std::f64::consts::FRAC_PI_2) * j);
        let sym = SymmetryAlignment {
            axis,
            reference: PALM_JOINTS.map(|j| reference.joint(j)),
        };
        let a = normalize_and_align(&turned, Some(&sym)).unwrap();
        assert!((a.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-9, "{}", a.angle);
        assert!(max_diff(&a.skeleton, &reference) < 1e-9);
    }

    #[test]
    fn coincident_wrist_and_knuckle_is_rejected() {
        let h = HandSkeleton::new(Handedness::Left, [Vec3::zeros(); JOINT_COUNT]).unwrap();
        assert!(matches!(normalize_and_align(&h, None), Err(AnalysisError::DegenerateHand)));
        let sym = SymmetryAlignment {
            axis: Vec3::zeros(),
            reference: [Vec3::zeros(); 6],
        };
        assert!(matches!(normalize_and_align(&hand(3), Some(&sym)), Err(AnalysisError::InvalidAxis)));
    }

    proptest! {
        #[test]
        fn alignment_is_idempotent(seed in 0u64..500, ax in -1.0f64..1.0, ay in -1.0f64..1.0) {
            let reference = normalize_and_align(&hand(seed + 1000), None).unwrap().skeleton;
            let sym = SymmetryAlignment { axis: Vec3::new(ax, ay, 1.0), reference: PALM_JOINTS.map(|j| reference.joint(j)) };
            let once = normalize_and_align(&hand(seed), Some(&sym)).unwrap().skeleton;
            let twice = normalize_and_align(&once, Some(&sym)).unwrap().skeleton;
            prop_assert!(max_diff(&once, &twice) < 1e-12);
        }
    }

    #[test]
    fn stddev_small_cases() {
        let a = hand(4);
        assert!(matches!(joint_stddev(&[a.clone()]), Err(AnalysisError::TooFewGrasps { .. })));
        let same = joint_stddev(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert!(same.per_joint.iter().all(|&s| s.abs() < 1e-15));
        let d = 0.03;
        let mut joints = *a.joints();
        joints[5] += Vec3::new(0.0, d, 0.0);
        let b = HandSkeleton::new(a.handedness, joints).unwrap();
        let s = joint_stddev(&[a, b]).unwrap();
        assert!((s.per_joint[5] - d / 2.0).abs() < 1e-15);
        assert!((s.mean - d / 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn stddev_matches_planted_covariance() {
        let base = hand(5);
        let sigmas = [0.004, 0.01, 0.002];
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let normals = sigmas.map(|s| Normal::new(0.0, s).unwrap());
        let set: Vec<HandSkeleton> = (0..n)
            .map(|_| {
                let mut joints = *base.joints();
                for j in joints.iter_mut() {
                    *j += Vec3::from_fn(|k, _| normals[k].sample(&mut rng));
                }
                HandSkeleton::new(base.handedness, joints).unwrap()
            })
            .collect();
        let spread = joint_stddev(&set).unwrap();
        let var: f64 = sigmas.iter().map(|s| s * s).sum();
        let expected = var * (n as f64 - 1.0) / n as f64;
        let sd_of_estimate = (2.0 * sigmas.iter().map(|s| s.powi(4)).sum::<f64>() / n as f64).sqrt();
        for s in spread.per_joint {
            assert!((s * s - expected).abs() < 3.0 * sd_of_estimate, "{} vs {}", s * s, expected);
        }
    }

    fn partition(labels: &[usize], ids: &[usize]) -> BTreeSet<BTreeSet<usize>> {
        let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (pos, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().insert(ids[pos]);
        }
        groups.into_values().collect()
    }

    fn planted_clusters() -> Vec<[f64; 63]> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = hand(8).flatten();
        let b = hand(9).flatten();
        (0..20)
            .map(|i| {
                let c = if i % 2 == 0 { a } else { b };
                c.map(|v| v + rng.random_range(-1e-3..1e-3))
            })
            .collect()
    }

    #[test]
    fn separated_clusters_are_recovered_exactly() {
        let poses = planted_clusters();
        let gap = l2(&poses[0], &poses[1]);
        assert!(gap > 0.05);
        let c = cluster_poses(&poses, 0.02).unwrap();
        assert_eq!(c.clusters, 2);
        assert!(c.labels.iter().enumerate().all(|(i, &l)| l == i % 2));
        assert!(c.mean_intra_distance > 0.0 && c.mean_intra_distance < 0.02);
        let singletons = cluster_poses(&poses, 0.0).unwrap();
        assert_eq!(singletons.clusters, 20);
        assert_eq!(singletons.mean_intra_distance, 0.0);
        assert_eq!(cluster_poses(&poses, 10.0).unwrap().clusters, 1);
    }

    #[test]
    fn partition_ignores_input_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        // Tight chain with equal gaps forces tie-breaking.
        let base = hand(11).flatten();
        let mut poses: Vec<[f64; 63]> = (0..12).map(|i| base.map(|v| v + 0.01 * (i / 2) as f64)).collect();
        poses.extend(planted_clusters());
        let ids: Vec<usize> = (0..poses.len()).collect();
        for threshold in [0.005, 0.02, 0.09, 0.3] {
            let reference = partition(&cluster_poses(&poses, threshold).unwrap().labels, &ids);
            for _ in 0..5 {
                let mut order = ids.clone();
                order.shuffle(&mut rng);
                let shuffled: Vec<[f64; 63]> = order.iter().map(|&i| poses[i]).collect();
                let c = cluster_poses(&shuffled, threshold).unwrap();
                assert_eq!(partition(&c.labels, &order), reference, "threshold {threshold}");
            }
        }
    }
}
