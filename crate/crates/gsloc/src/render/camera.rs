//! Pinhole camera: intrinsics, image size, world-to-camera pose.

use crate::lie::{RigidTransform, Rotation};
use crate::render::RenderError;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub pose: RigidTransform,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        pose: RigidTransform,
        near: f64,
        far: f64,
    ) -> Result<Self, RenderError> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(RenderError::InvalidCamera("fx and fy must be positive"));
        }
        if !(0.0 < self.near && self.near < self.far) {
            return Err(RenderError::InvalidCamera("need 0 < near < far"));
        }
        if self.width < 8 || self.height < 8 {
            return Err(RenderError::InvalidCamera("image must be at least 8x8"));
        }
        Ok(())
    }

    /// Intrinsics from a horizontal field of view, principal point centered.
    pub fn from_hfov(
        hfov_rad: f64,
        width: u32,
        height: u32,
        pose: RigidTransform,
        near: f64,
        far: f64,
    ) -> Result<Self, RenderError> {
        let fx = width as f64 * 0.5 / (hfov_rad * 0.5).tan();
        Camera::new(
            fx,
            fx,
            width as f64 * 0.5,
            height as f64 * 0.5,
            width,
            height,
            pose,
            near,
            far,
        )
    }

    /// World-to-camera pose looking from `eye` toward `target`.
    ///
    /// Camera axes: +z forward, +x right, +y down (so `up` maps near -y).
    pub fn look_at_pose(eye: &Vector3<f64>, target: &Vector3<f64>, up: &Vector3<f64>) -> RigidTransform {
        let z = (target - eye).normalize();
        let mut x = z.cross(up);
        if x.norm() < 1e-9 {
            // Looking straight along `up`; pick any perpendicular right axis.
            x = z.cross(&Vector3::x());
            if x.norm() < 1e-9 {
                x = z.cross(&Vector3::y());
            }
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rot = Rotation::from_matrix_unchecked(r);
        let t = -(r * eye);
        RigidTransform::new(rot, t)
    }

    pub fn with_pose(&self, pose: RigidTransform) -> Camera {
        Camera { pose, ..*self }
    }

    /// Integer-factor downscale of resolution and intrinsics.
    pub fn downscaled(&self, factor: u32) -> Result<Camera, RenderError> {
        let f = factor.max(1) as f64;
        Camera::new(
            self.fx / f,
            self.fy / f,
            self.cx / f,
            self.cy / f,
            (self.width / factor).max(8),
            (self.height / factor).max(8),
            self.pose,
            self.near,
            self.far,
        )
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.pose.camera_center()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn look_at_maps_eye_to_origin_and_target_to_z() {
        let eye = Vector3::new(1.0, 2.0, 0.5);
        let target = Vector3::new(-0.5, 0.3, 1.2);
        let pose = Camera::look_at_pose(&eye, &target, &Vector3::z());
        assert_relative_eq!(pose.apply(&eye), Vector3::zeros(), epsilon = 1e-12);
        let tc = pose.apply(&target);
        assert_relative_eq!(tc.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(tc.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(tc.z, (target - eye).norm(), epsilon = 1e-12);
        assert!(pose.rotation.defect() < 1e-12);
        // +y is down: world-up maps to negative camera-y.
        assert!(pose.rotation.rotate(&Vector3::z()).y <= 1e-12);
    }

    #[test]
    fn camera_validation() {
        let pose = RigidTransform::identity();
        assert!(Camera::new(100.0, 100.0, 32.0, 32.0, 64, 64, pose, 0.1, 10.0).is_ok());
        assert!(Camera::new(-1.0, 100.0, 32.0, 32.0, 64, 64, pose, 0.1, 10.0).is_err());
        assert!(Camera::new(100.0, 100.0, 32.0, 32.0, 64, 64, pose, 2.0, 1.0).is_err());
        assert!(Camera::new(100.0, 100.0, 32.0, 32.0, 4, 64, pose, 0.1, 10.0).is_err());
    }

    #[test]
    fn downscale_halves_intrinsics() {
        let pose = RigidTransform::identity();
        let cam = Camera::new(200.0, 200.0, 120.0, 67.5, 240, 135, pose, 0.1, 10.0).unwrap();
        let half = cam.downscaled(2).unwrap();
        assert_eq!(half.width, 120);
        assert_eq!(half.height, 67);
        assert_relative_eq!(half.fx, 100.0);
        assert_relative_eq!(half.cx, 60.0);
    }
}
