use nalgebra::{Matrix3, Matrix4, Rotation3, Unit};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::ops::Mul;

use super::{GeomError, Vec3};

/// Tolerance on `det(R) = 1` and `R Rᵀ = I` when accepting a rotation from raw numbers.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Proper rigid motion `x ↦ R x + t` (meters).
///
/// Naming convention used throughout the crate: `a_from_b` maps coordinates
/// expressed in frame `b` into frame `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Rotation3<f64>,
    translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_parts(rotation: Rotation3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::from_parts(Rotation3::identity(), translation)
    }

    /// Rotation given as an axis-angle vector (direction = axis, norm = angle in radians).
    pub fn from_axis_angle(axis_angle: Vec3, translation: Vec3) -> Self {
        Self::from_parts(Rotation3::new(axis_angle), translation)
    }

    pub fn from_axis_angle_about(axis: &Unit<Vec3>, angle: f64) -> Self {
        Self::from_parts(Rotation3::from_axis_angle(axis, angle), Vec3::zeros())
    }

    /// Accepts a rotation matrix only if it is proper orthogonal within [`ROTATION_TOLERANCE`].
    pub fn try_new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeomError> {
        let ortho = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeomError::InvalidTransform("non-finite entries".into()));
        }
        if ortho > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeomError::InvalidTransform(format!(
                "rotation not proper orthogonal (|RRᵀ-I|={ortho:.3e}, det={det:.12})"
            )));
        }
        Ok(Self::from_parts(
            Rotation3::from_matrix_unchecked(rotation),
            translation,
        ))
    }

    pub fn try_from_matrix4(m: &Matrix4<f64>) -> Result<Self, GeomError> {
        let bottom = m.fixed_view::<1, 4>(3, 0);
        if (bottom[0].abs() + bottom[1].abs() + bottom[2].abs() + (bottom[3] - 1.0).abs())
            > ROTATION_TOLERANCE
        {
            return Err(GeomError::InvalidTransform(
                "last row of homogeneous matrix must be [0 0 0 1]".into(),
            ));
        }
        Self::try_new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::from_parts(r_inv, -(r_inv * self.translation))
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Least-squares rigid motion taking `src[i]` onto `dst[i]` (Kabsch). Returns `None`
    /// for fewer than three points or a degenerate (collinear) configuration.
    pub fn align_points(src: &[Vec3], dst: &[Vec3]) -> Option<Self> {
        if src.len() != dst.len() || src.len() < 3 {
            return None;
        }
        let n = src.len() as f64;
        let cs = src.iter().sum::<Vec3>() / n;
        let cd = dst.iter().sum::<Vec3>() / n;
        let mut h = Matrix3::zeros();
        for (a, b) in src.iter().zip(dst) {
            h += (b - cd) * (a - cs).transpose();
        }
        let svd = h.svd(true, true);
        let (u, v_t) = (svd.u?, svd.v_t?);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        if !(sv[1] > 1e-12 * sv[0].max(f64::MIN_POSITIVE)) {
            return None;
        }
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            // Flip the axis of the smallest singular value.
            let k = svd.singular_values.imin();
            d[(k, k)] = -1.0;
        }
        let r = Rotation3::from_matrix_unchecked(u * d * v_t);
        Some(Self::from_parts(r, cd - r * cs))
    }

    /// Geodesic rotation distance (radians) and translation distance (meters).
    pub fn distance_to(&self, other: &RigidTransform) -> (f64, f64) {
        let m = (self.rotation.inverse() * other.rotation).into_inner();
        let sin = 0.5
            * ((m[(2, 1)] - m[(1, 2)]).powi(2) + (m[(0, 2)] - m[(2, 0)]).powi(2) + (m[(1, 0)] - m[(0, 1)]).powi(2))
                .sqrt();
        let cos = 0.5 * (m.trace() - 1.0);
        let angle = sin.atan2(cos);
        (angle, (self.translation - other.translation).norm())
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        RigidTransform::from_parts(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl Mul for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        *self * *rhs
    }
}

// Serialized as a row-major 4×4 homogeneous matrix.
impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let m = self.to_matrix4();
        let rows: [[f64; 4]; 4] =
            std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]));
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = <[[f64; 4]; 4]>::deserialize(deserializer)?;
        let m = Matrix4::from_fn(|r, c| rows[r][c]);
        RigidTransform::try_from_matrix4(&m).map_err(serde::de::Error::custom)
    }
}
