use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{GeomError, RigidTransform, Vec3};

/// Pinhole intrinsics in pixels. Inputs are assumed rectified; no distortion model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeomError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeomError::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.cx < 0.0 || self.cy < 0.0 || self.cx > self.width as f64 || self.cy > self.height as f64 {
            return Err(GeomError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Projects a point already in the camera frame.
    #[inline]
    pub fn project_camera_point(&self, pc: &Vec3) -> Result<Vector2<f64>, GeomError> {
        if !(pc.z > 0.0) {
            return Err(GeomError::BehindCamera { depth: pc.z });
        }
        Ok(Vector2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// Normalized image coordinates `K⁻¹ [u v 1]ᵀ` (first two components).
    #[inline]
    pub fn normalize(&self, pixel: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy)
    }
}

/// Pinhole projection of `x` through the rigid transform `camera_from_x`.
pub fn project(
    x: &Vec3,
    intrinsics: &CameraIntrinsics,
    camera_from_x: &RigidTransform,
) -> Result<Vector2<f64>, GeomError> {
    intrinsics.project_camera_point(&camera_from_x.apply(x))
}

/// Inverse of [`project`] for a pixel observed at the given camera-frame depth.
pub fn backproject(
    pixel: &Vector2<f64>,
    depth: f64,
    intrinsics: &CameraIntrinsics,
    camera_from_x: &RigidTransform,
) -> Result<Vec3, GeomError> {
    if !(depth > 0.0) {
        return Err(GeomError::BehindCamera { depth });
    }
    let n = intrinsics.normalize(pixel);
    let pc = Vec3::new(n.x * depth, n.y * depth, depth);
    Ok(camera_from_x.inverse().apply(&pc))
}

/// `camera_from_world` for a camera at `eye` looking at `target` (OpenCV axes: +z forward,
/// +y down). `up` must not be parallel to the viewing direction.
pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<RigidTransform, GeomError> {
    let z = (target - eye)
        .try_normalize(1e-12)
        .ok_or_else(|| GeomError::InvalidTransform("eye coincides with target".into()))?;
    let x = z
        .cross(up)
        .try_normalize(1e-12)
        .ok_or_else(|| GeomError::InvalidTransform("up is parallel to view direction".into()))?;
    let y = z.cross(&x);
    let world_from_camera = nalgebra::Matrix3::from_columns(&[x, y, z]);
    let r = world_from_camera.transpose();
    RigidTransform::try_new(r, -(r * eye))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn look_at_centers_target() {
        let eye = Vec3::new(1.0, 0.3, 0.2);
        let t = look_at(&eye, &Vec3::zeros(), &Vec3::z()).unwrap();
        let c = t.apply(&Vec3::zeros());
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.z > 0.0);
        // World up appears as image up (negative y).
        assert!(t.apply_vector(&Vec3::z()).y < 0.0);
        assert!(look_at(&eye, &eye, &Vec3::z()).is_err());
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 520.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let uv = project(&Vec3::new(0.0, 0.0, 2.5), &k(), &RigidTransform::identity()).unwrap();
        assert_eq!((uv.x, uv.y), (320.0, 240.0));
    }

    #[test]
    fn offset_point_follows_pinhole_formula() {
        let uv = project(&Vec3::new(0.1, 0.0, 1.0), &k(), &RigidTransform::identity()).unwrap();
        assert!((uv.x - 370.0).abs() < 1e-12);
        assert_eq!(uv.y, 240.0);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let err = project(&Vec3::new(0.0, 0.0, -1.0), &k(), &RigidTransform::identity());
        assert!(matches!(err, Err(GeomError::BehindCamera { .. })));
        assert!(project(&Vec3::new(0.0, 0.0, 0.0), &k(), &RigidTransform::identity()).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.0, 1.0, 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn backproject_then_project_is_identity(
            u in 0.0f64..640.0, v in 0.0f64..480.0, depth in 0.05f64..20.0,
            rx in -3.0f64..3.0, ry in -3.0f64..3.0, rz in -3.0f64..3.0,
            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
        ) {
            let t = RigidTransform::from_axis_angle(Vec3::new(rx, ry, rz), Vec3::new(tx, ty, tz));
            let px = Vector2::new(u, v);
            let x = backproject(&px, depth, &k(), &t).unwrap();
            let back = project(&x, &k(), &t).unwrap();
            prop_assert!((back - px).norm() < 1e-9);
        }
    }
}
