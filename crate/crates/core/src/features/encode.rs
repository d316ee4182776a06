use rayon::prelude::*;

use crate::geom::{point_segment_distance, PointCloud, Vec3};
use crate::handmodel::{HandProxy, HandSkeleton, JOINT_COUNT, PHALANGE_COUNT};

use super::{FeatureError, FeatureFamily, FeatureMatrix};

const BLOCK: usize = 256;

/// Index of the hand owning the joint closest to `p`; ties go to the lower index.
pub fn select_hand(p: &Vec3, hands: &[HandSkeleton]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (h, hand) in hands.iter().enumerate() {
        let d = hand
            .joints()
            .iter()
            .map(|j| (j - p).norm_squared())
            .fold(f64::INFINITY, f64::min);
        if d < best.0 {
            best = (d, h);
        }
    }
    best.1
}

fn check_hands(hands: &[HandSkeleton]) -> Result<(), FeatureError> {
    if hands.is_empty() {
        return Err(FeatureError::NoHands);
    }
    if hands.len() > u8::MAX as usize {
        return Err(FeatureError::Invalid(format!("{} hands", hands.len())));
    }
    Ok(())
}

fn check_normals(points: &PointCloud) -> Result<(), FeatureError> {
    if points.normals.len() != points.points.len() {
        return Err(FeatureError::MissingNormals {
            points: points.points.len(),
            normals: points.normals.len(),
        });
    }
    Ok(())
}

/// Evaluates `f(point, normal, hand_index, out_row)` for every point in parallel blocks and
/// returns the filled data with per-row hand labels and the per-row extra label from `f`.
fn fill<F>(points: &PointCloud, hands: &[HandSkeleton], dims: usize, f: F) -> (Vec<f64>, Vec<u8>, Vec<u8>)
where
    F: Fn(&Vec3, &Vec3, usize, &mut [f64]) -> u8 + Sync,
{
    let n = points.points.len();
    let mut data = vec![0.0; n * dims];
    let mut row_hand = vec![0u8; n];
    let mut extra = vec![0u8; n];
    let zero = Vec3::zeros();
    data.par_chunks_mut(BLOCK * dims)
        .zip(row_hand.par_chunks_mut(BLOCK))
        .zip(extra.par_chunks_mut(BLOCK))
        .enumerate()
        .for_each(|(b, ((rows, labels), extras))| {
            for (k, row) in rows.chunks_mut(dims).enumerate() {
                let i = b * BLOCK + k;
                let p = &points.points[i];
                let nrm = points.normals.get(i).unwrap_or(&zero);
                let h = select_hand(p, hands);
                labels[k] = h as u8;
                extras[k] = f(p, nrm, h, row);
            }
        });
    (data, row_hand, extra)
}

/// Flattened joints of the selected hand (object frame) for every point.
pub fn simple_joints(points: &PointCloud, hands: &[HandSkeleton]) -> Result<FeatureMatrix, FeatureError> {
    check_hands(hands)?;
    let flat: Vec<[f64; 3 * JOINT_COUNT]> = hands.iter().map(|h| h.flatten()).collect();
    let (data, row_hand, _) = fill(points, hands, 63, |_, _, h, row| {
        row.copy_from_slice(&flat[h]);
        0
    });
    FeatureMatrix::new(FeatureFamily::SimpleJoints, data, row_hand, None)
}

/// `joint − point` for the 21 joints of the selected hand, then the surface normal.
pub fn relative_joints(points: &PointCloud, hands: &[HandSkeleton]) -> Result<FeatureMatrix, FeatureError> {
    check_hands(hands)?;
    check_normals(points)?;
    let (data, row_hand, _) = fill(points, hands, 66, |p, n, h, row| {
        for (j, joint) in hands[h].joints().iter().enumerate() {
            row[3 * j..3 * j + 3].copy_from_slice((joint - p).as_slice());
        }
        row[63..66].copy_from_slice(n.as_slice());
        0
    });
    FeatureMatrix::new(FeatureFamily::RelativeJoints, data, row_hand, None)
}

/// 20 point-to-phalange distances, then the 20 dots of the unit offset with the normal.
/// A point lying on a segment gets a dot of 0.
pub fn skeleton_features(points: &PointCloud, hands: &[HandSkeleton]) -> Result<FeatureMatrix, FeatureError> {
    check_hands(hands)?;
    check_normals(points)?;
    let (data, row_hand, _) = fill(points, hands, 40, |p, n, h, row| {
        for (k, (a, b)) in hands[h].segments().enumerate() {
            let (d, closest) = point_segment_distance(p, &a, &b);
            row[k] = d;
            row[PHALANGE_COUNT + k] = if d > 0.0 { (closest - p).dot(n) / d } else { 0.0 };
        }
        0
    });
    FeatureMatrix::new(FeatureFamily::Skeleton, data, row_hand, None)
}

/// Distance to the hand proxy surface (0 inside), unit offset · normal (0 when the
/// distance is 0), then the 21 point-to-joint distances.
pub fn mesh_features(
    points: &PointCloud,
    proxies: &[HandProxy],
    hands: &[HandSkeleton],
) -> Result<FeatureMatrix, FeatureError> {
    check_hands(hands)?;
    check_normals(points)?;
    if proxies.len() != hands.len() {
        return Err(FeatureError::ProxyCount {
            hands: hands.len(),
            proxies: proxies.len(),
        });
    }
    let (data, row_hand, parts) = fill(points, hands, 23, |p, n, h, row| {
        let q = proxies[h].query(p);
        if q.signed_distance > 0.0 {
            let d = (q.closest_point - p).norm();
            row[0] = d;
            row[1] = if d > 0.0 { (q.closest_point - p).dot(n) / d } else { 0.0 };
        }
        for (j, joint) in hands[h].joints().iter().enumerate() {
            row[2 + j] = (joint - p).norm();
        }
        q.part as u8
    });
    FeatureMatrix::new(FeatureFamily::Mesh, data, row_hand, Some(parts))
}

/// Dispatches on `family`. `proxies` is only read for the mesh family.
pub fn compute_features(
    family: FeatureFamily,
    points: &PointCloud,
    hands: &[HandSkeleton],
    proxies: &[HandProxy],
) -> Result<FeatureMatrix, FeatureError> {
    match family {
        FeatureFamily::SimpleJoints => simple_joints(points, hands),
        FeatureFamily::RelativeJoints => relative_joints(points, hands),
        FeatureFamily::Skeleton => skeleton_features(points, hands),
        FeatureFamily::Mesh => mesh_features(points, proxies, hands),
    }
}
