use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::geom::Vec3;
use crate::handmodel::{part_joints, HandSkeleton, JOINT_COUNT, PHALANGES, PHALANGE_COUNT};

use super::{DropoutRecord, FeatureError, FeatureFamily, FeatureMatrix};

/// ⌈0.15 · 21⌉ joints dropped per hand.
pub const DROPPED_JOINTS: usize = 4;

/// Camera position uniform on the sphere of radius 3× the grasp bounding radius around
/// the centroid of all joints. Returns `(camera, centroid)`.
pub fn sample_dropout_camera(hands: &[HandSkeleton], seed: u64) -> (Vec3, Vec3) {
    let joints: Vec<Vec3> = hands.iter().flat_map(|h| h.joints().iter().copied()).collect();
    let centroid = joints.iter().sum::<Vec3>() / joints.len().max(1) as f64;
    let radius = joints.iter().map(|j| (j - centroid).norm()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: [f64; 3] = UnitSphere.sample(&mut rng);
    (centroid + Vec3::from(u) * (3.0 * radius), centroid)
}

/// The joints farthest from `camera`, ascending by id. Equal distances keep the lower id.
pub fn dropped_joints(hand: &HandSkeleton, camera: &Vec3) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = hand.joints().iter().map(|j| (j - camera).norm()).zip(0..).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = order[..DROPPED_JOINTS].iter().map(|&(_, j)| j).collect();
    out.sort_unstable();
    out
}

/// Entries of one row that are zeroed when `dropped` joints are removed. `part` is the
/// row's closest proxy part (mesh family only).
pub fn dropout_mask(family: FeatureFamily, dropped: &[usize], part: Option<usize>) -> Vec<bool> {
    let mut dropped_set = [false; JOINT_COUNT];
    for &j in dropped {
        dropped_set[j] = true;
    }
    let mut mask = vec![false; family.dims()];
    match family {
        FeatureFamily::SimpleJoints | FeatureFamily::RelativeJoints => {
            for j in (0..JOINT_COUNT).filter(|&j| dropped_set[j]) {
                mask[3 * j..3 * j + 3].fill(true);
            }
        }
        FeatureFamily::Skeleton => {
            for (k, &(a, b)) in PHALANGES.iter().enumerate() {
                if dropped_set[a] || dropped_set[b] {
                    mask[k] = true;
                    mask[PHALANGE_COUNT + k] = true;
                }
            }
        }
        FeatureFamily::Mesh => {
            for j in (0..JOINT_COUNT).filter(|&j| dropped_set[j]) {
                mask[2 + j] = true;
            }
            if let Some(part) = part {
                if part_joints(part).iter().all(|&j| dropped_set[j]) {
                    mask[0] = true;
                    mask[1] = true;
                }
            }
        }
    }
    mask
}

/// Zeroes the features attributable to the joints each hand loses to a camera at `camera`.
pub fn occlusion_dropout_from(
    fm: &FeatureMatrix,
    hands: &[HandSkeleton],
    camera: Vec3,
    target: Vec3,
) -> Result<FeatureMatrix, FeatureError> {
    if hands.is_empty() {
        return Err(FeatureError::NoHands);
    }
    if let Some(&h) = fm.row_hand().iter().max() {
        if h as usize >= hands.len() {
            return Err(FeatureError::Invalid(format!(
                "row references hand {h} but {} were given",
                hands.len()
            )));
        }
    }
    let dropped: Vec<Vec<usize>> = hands.iter().map(|h| dropped_joints(h, &camera)).collect();
    let family = fm.family();
    let dims = family.dims();
    // Non-mesh families share one mask per hand.
    let hand_masks: Vec<Vec<bool>> = dropped.iter().map(|d| dropout_mask(family, d, None)).collect();
    let mut out = fm.clone();
    let parts = fm.closest_part().map(|p| p.to_vec());
    let row_hand = fm.row_hand().to_vec();
    let data = out.data_mut();
    for (i, row) in data.chunks_mut(dims).enumerate() {
        let h = row_hand[i] as usize;
        let part_mask;
        let mask = match &parts {
            Some(p) => {
                part_mask = dropout_mask(family, &dropped[h], Some(p[i] as usize));
                &part_mask
            }
            None => &hand_masks[h],
        };
        for (v, &m) in row.iter_mut().zip(mask) {
            if m {
                *v = 0.0;
            }
        }
    }
    out.dropout = Some(DropoutRecord {
        camera_position: camera.into(),
        camera_target: target.into(),
        dropped_joints: dropped,
    });
    Ok(out)
}

/// Seeded occlusion dropout: samples a camera and drops the farthest joints per hand.
pub fn occlusion_dropout(fm: &FeatureMatrix, hands: &[HandSkeleton], seed: u64) -> Result<FeatureMatrix, FeatureError> {
    if hands.is_empty() {
        return Err(FeatureError::NoHands);
    }
    let (camera, target) = sample_dropout_camera(hands, seed);
    occlusion_dropout_from(fm, hands, camera, target)
}
