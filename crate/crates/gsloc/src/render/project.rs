//! Gaussian projection: world -> camera -> image plane.
//!
//! The projected covariance gets an isotropic dilation so sub-pixel splats
//! never vanish. Per-pixel coverage uses the exact alpha-cutoff ellipse
//! `q <= q_cut = 2 ln(opacity * 255)`; `alpha >= 1/255` inside it and below
//! the cutoff outside, so no contribution is lost to the bounding box.

use super::{sh_eval_with_grad, Camera, RenderError, ALPHA_CUTOFF, COV_DILATION};
use crate::lie::RigidTransform;
use crate::scene::{covariance_world, Gaussian3D};
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

/// Mean and covariance expressed in the camera frame (Eq. world-to-camera).
pub fn transform_to_camera(
    g: &Gaussian3D,
    t: &RigidTransform,
) -> (Vector3<f64>, Matrix3<f64>) {
    let mu_c = t.apply(&g.center);
    let r = t.rotation.matrix();
    let sigma_c = r * covariance_world(g) * r.transpose();
    (mu_c, sigma_c)
}

/// Jacobian of the pinhole projection at a camera-frame point.
pub fn perspective_jacobian(mu_c: &Vector3<f64>, cam: &Camera) -> Result<Matrix2x3<f64>, RenderError> {
    if mu_c.z < cam.near {
        return Err(RenderError::BehindCamera { z: mu_c.z });
    }
    Ok(jacobian_unchecked(mu_c, cam))
}

fn jacobian_unchecked(mu_c: &Vector3<f64>, cam: &Camera) -> Matrix2x3<f64> {
    let z_inv = 1.0 / mu_c.z;
    let z_inv2 = z_inv * z_inv;
    Matrix2x3::new(
        cam.fx * z_inv,
        0.0,
        -cam.fx * mu_c.x * z_inv2,
        0.0,
        cam.fy * z_inv,
        -cam.fy * mu_c.y * z_inv2,
    )
}

/// Public projection result for a single gaussian.
#[derive(Debug, Clone)]
pub enum Projection {
    Splat(Splat2D),
    Culled,
}

/// A 2D splat: projected mean, dilated covariance, depth, view color.
#[derive(Debug, Clone)]
pub struct Splat2D {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
}

/// Applies the camera transform, affine projection and dilation; culls on
/// depth range or when the cutoff footprint misses the image.
pub fn project_gaussian(g: &Gaussian3D, cam: &Camera) -> Projection {
    match prepare_splat(g, cam, &cam.pose.camera_center(), 0, false) {
        Some((p, _)) => Projection::Splat(Splat2D {
            mean: Vector2::new(p.mean[0], p.mean[1]),
            cov: Matrix2::new(p.cov[0], p.cov[1], p.cov[1], p.cov[2]),
            depth: p.depth,
            color: p.color,
            opacity: p.opacity,
        }),
        None => Projection::Culled,
    }
}

/// Hot-path splat data, plain f64s for the pixel loop.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub mean: [f64; 2],
    /// Dilated covariance (xx, xy, yy).
    pub cov: [f64; 3],
    /// Inverse of the dilated covariance (a, b, c).
    pub inv: [f64; 3],
    /// Alpha-cutoff threshold on the quadratic form.
    pub q_cut: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    pub depth: f64,
    /// Inclusive pixel bounds of the cutoff ellipse.
    pub x_min: i32,
    pub x_max: i32,
    pub y_min: i32,
    pub y_max: i32,
}

/// Per-splat quantities needed only by the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct BackwardData {
    pub mu_c: Vector3<f64>,
    pub jac: Matrix2x3<f64>,
    /// Camera-frame covariance (undilated).
    pub sigma_c: Matrix3<f64>,
    /// R * Sigma_w, for the rotation chain.
    pub r_sigma_w: Matrix3<f64>,
    /// d color[ch] / d dir[axis], zeroed for clamped channels.
    pub dcolor_ddir: [[f64; 3]; 3],
    pub dir: Vector3<f64>,
    pub inv_dist: f64,
}

/// Projects one gaussian; `None` means culled. `cam_center` is `-R^T t`,
/// passed in so scene-wide prep computes it once.
pub(crate) fn prepare_splat(
    g: &Gaussian3D,
    cam: &Camera,
    cam_center: &Vector3<f64>,
    _index: usize,
    with_backward: bool,
) -> Option<(Prepared, Option<BackwardData>)> {
    if g.opacity <= ALPHA_CUTOFF {
        return None; // alpha can never reach the cutoff
    }
    let (mu_c, sigma_c) = transform_to_camera(g, &cam.pose);
    if mu_c.z < cam.near || mu_c.z > cam.far {
        return None;
    }
    let j = jacobian_unchecked(&mu_c, cam);
    let cov2 = j * sigma_c * j.transpose();
    let (xx, xy, yy) = (
        cov2[(0, 0)] + COV_DILATION,
        cov2[(0, 1)],
        cov2[(1, 1)] + COV_DILATION,
    );
    let det = xx * yy - xy * xy;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let inv = [yy / det, -xy / det, xx / det];

    let q_cut = 2.0 * (g.opacity / ALPHA_CUTOFF).ln();
    let mean_px = [
        cam.fx * mu_c.x / mu_c.z + cam.cx,
        cam.fy * mu_c.y / mu_c.z + cam.cy,
    ];
    // Axis-aligned extents of the ellipse q(d) = q_cut.
    let rx = (q_cut * xx).sqrt();
    let ry = (q_cut * yy).sqrt();
    // Pixel centers at integer + 0.5.
    let x_min = (mean_px[0] - rx - 0.5).ceil().max(0.0) as i32;
    let x_max = (mean_px[0] + rx - 0.5).floor().min(cam.width as f64 - 1.0) as i32;
    let y_min = (mean_px[1] - ry - 0.5).ceil().max(0.0) as i32;
    let y_max = (mean_px[1] + ry - 0.5).floor().min(cam.height as f64 - 1.0) as i32;
    if x_min > x_max || y_min > y_max {
        return None; // footprint misses the image
    }

    let v = g.center - cam_center;
    let dist = v.norm();
    let dir = v / dist;
    let (raw_color, raw_grad) = sh_eval_with_grad(&g.sh, &[dir.x, dir.y, dir.z]);
    let mut color = [0.0; 3];
    let mut dcolor = raw_grad;
    for ch in 0..3 {
        color[ch] = raw_color[ch].clamp(0.0, 1.0);
        if raw_color[ch] <= 0.0 || raw_color[ch] >= 1.0 {
            dcolor[ch] = [0.0; 3];
        }
    }

    let prepared = Prepared {
        mean: mean_px,
        cov: [xx, xy, yy],
        inv,
        q_cut,
        opacity: g.opacity,
        color,
        depth: mu_c.z,
        x_min,
        x_max,
        y_min,
        y_max,
    };
    let backward = with_backward.then(|| {
        let r = cam.pose.rotation.matrix();
        BackwardData {
            mu_c,
            jac: j,
            sigma_c,
            r_sigma_w: r * covariance_world(g),
            dcolor_ddir: dcolor,
            dir,
            inv_dist: 1.0 / dist,
        }
    });
    Some((prepared, backward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{exp_se3, Rotation, TangentVector};
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_cam() -> Camera {
        Camera::new(
            100.0,
            100.0,
            32.0,
            32.0,
            64,
            64,
            RigidTransform::identity(),
            0.1,
            100.0,
        )
        .unwrap()
    }

    fn ball(center: Vector3<f64>, s: f64, opacity: f64) -> Gaussian3D {
        Gaussian3D::flat_colored(
            center,
            Vector3::new(s, s, s),
            UnitQuaternion::identity(),
            opacity,
            [0.6, 0.5, 0.4],
        )
    }

    #[test]
    fn transform_identity_and_translation() {
        let g = ball(Vector3::new(0.2, -0.1, 2.0), 0.05, 0.8);
        let (mu, cov) = transform_to_camera(&g, &RigidTransform::identity());
        assert_eq!(mu, g.center);
        assert_relative_eq!(cov, covariance_world(&g), epsilon = 1e-15);

        let t = RigidTransform::new(Rotation::identity(), Vector3::new(1.0, 2.0, 3.0));
        let (mu, cov) = transform_to_camera(&g, &t);
        assert_eq!(mu, g.center + Vector3::new(1.0, 2.0, 3.0));
        assert_relative_eq!(cov, covariance_world(&g), epsilon = 1e-15);
    }

    #[test]
    fn transform_preserves_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let g = Gaussian3D::flat_colored(
                Vector3::new(0.0, 0.0, 2.0),
                Vector3::new(
                    rng.gen_range(0.05..0.5),
                    rng.gen_range(0.05..0.5),
                    rng.gen_range(0.05..0.5),
                ),
                UnitQuaternion::from_euler_angles(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                ),
                0.7,
                [0.5; 3],
            );
            let xi = TangentVector::new(
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
            let t = exp_se3(&xi);
            let (_, cov_c) = transform_to_camera(&g, &t);
            let mut a: Vec<f64> = covariance_world(&g).symmetric_eigenvalues().iter().copied().collect();
            let mut b: Vec<f64> = cov_c.symmetric_eigenvalues().iter().copied().collect();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (x, y) in a.iter().zip(&b) {
                assert_relative_eq!(x, y, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_basic_shape() {
        let cam = Camera::new(
            1.0,
            1.0,
            32.0,
            32.0,
            64,
            64,
            RigidTransform::identity(),
            0.1,
            100.0,
        )
        .unwrap();
        let j = perspective_jacobian(&Vector3::new(0.0, 0.0, 1.0), &cam).unwrap();
        assert_relative_eq!(j, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0), epsilon = 1e-15);

        // Doubling z halves the leading diagonal entries.
        let j2 = perspective_jacobian(&Vector3::new(0.0, 0.0, 2.0), &cam).unwrap();
        assert_relative_eq!(j2[(0, 0)], 0.5 * j[(0, 0)]);
        assert_relative_eq!(j2[(1, 1)], 0.5 * j[(1, 1)]);

        assert!(matches!(
            perspective_jacobian(&Vector3::new(0.0, 0.0, -1.0), &cam),
            Err(RenderError::BehindCamera { .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences_of_projection() {
        let cam = test_cam();
        let project = |p: &Vector3<f64>| {
            Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let p = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..5.0),
            );
            let j = perspective_jacobian(&p, &cam).unwrap();
            let eps = 1e-6;
            for axis in 0..3 {
                let mut pp = p;
                let mut pm = p;
                pp[axis] += eps;
                pm[axis] -= eps;
                let fd = (project(&pp) - project(&pm)) / (2.0 * eps);
                assert_relative_eq!(j.column(axis).into_owned(), fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn on_axis_gaussian_projects_to_principal_point() {
        let cam = test_cam();
        let g = ball(Vector3::new(0.0, 0.0, 1.0), 0.05, 0.8);
        match project_gaussian(&g, &cam) {
            Projection::Splat(s) => {
                assert_relative_eq!(s.mean, Vector2::new(32.0, 32.0), epsilon = 1e-12);
                // Closed form for the axis-aligned case.
                let expect = (cam.fx * 0.05 / 1.0).powi(2);
                assert_relative_eq!(s.cov[(0, 0)], expect + COV_DILATION, epsilon = 1e-10);
                assert_relative_eq!(s.cov[(1, 1)], expect + COV_DILATION, epsilon = 1e-10);
                assert_relative_eq!(s.cov[(0, 1)], 0.0, epsilon = 1e-12);
                assert_relative_eq!(s.depth, 1.0);
            }
            Projection::Culled => panic!("unexpected cull"),
        }
    }

    #[test]
    fn behind_camera_and_off_screen_culled() {
        let cam = test_cam();
        let behind = ball(Vector3::new(0.0, 0.0, -1.0), 0.05, 0.8);
        assert!(matches!(project_gaussian(&behind, &cam), Projection::Culled));
        let off = ball(Vector3::new(50.0, 0.0, 1.0), 0.01, 0.8);
        assert!(matches!(project_gaussian(&off, &cam), Projection::Culled));
        let faint = ball(Vector3::new(0.0, 0.0, 1.0), 0.05, 1.0 / 300.0);
        assert!(matches!(project_gaussian(&faint, &cam), Projection::Culled));
    }
}
