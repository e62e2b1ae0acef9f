//! SE(3)/SO(3) arithmetic and the analytic pose Jacobians used by the
//! differentiable renderer.
//!
//! Conventions, used consistently everywhere in this crate:
//!
//! * A pose is the world-to-camera transform `T = (R, t)`, acting on points
//!   as `p_c = R p_w + t`.
//! * Tangent vectors are `xi = (rho, phi)` with the translational part
//!   `rho` in components 0..3 and the rotational part `phi` in 3..6.
//! * Perturbations are left-multiplicative: `T <- exp(xi) * T`. All
//!   Jacobians below are derivatives with respect to `xi` at `xi = 0`,
//!   and the finite-difference suite in the tests is the arbiter of signs.
//! * `d_rotation_d_pose` flattens the rotation by stacking its columns
//!   `r_1, r_2, r_3` into a 9-vector (rows 0..3 = r_1, and so on).
//!
//! Under this convention the Jacobian of the camera center `t_c^w = -R^T t`
//! has translational block `-R^T` (not `+R^T`); see the unit tests, which
//! pin every sign against central finite differences.

use nalgebra::{Matrix3, Matrix3x6, Quaternion, SMatrix, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rotation angle must stay on the principal branch for a stable logarithm.
#[derive(Debug, Error, PartialEq)]
pub enum LieError {
    #[error("rotation angle {angle} is within {margin} of pi; logarithm is ill-conditioned")]
    AngleNearPi { angle: f64, margin: f64 },
}

/// Angles closer to pi than this are rejected by [`log_so3`].
pub const ANGLE_NEAR_PI_MARGIN: f64 = 1e-6;

// Series switch points. Below SMALL_ANGLE the trig ratios are evaluated by
// Taylor expansion; CUBIC_SERIES is higher because (theta - sin theta)/theta^3
// loses all precision to cancellation well before 1e-8.
const SMALL_ANGLE: f64 = 1e-8;
const CUBIC_SERIES: f64 = 1e-4;

/// 3x3 rotation matrix, orthonormal with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix assumed to already be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Rotation(q.to_rotation_matrix().into_inner())
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(self.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic rotation angle in radians, in [0, pi].
    pub fn angle(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let w = vee(&(self.0 - self.0.transpose())) * 0.5;
        w.norm().atan2(c)
    }

    /// Max deviation from orthonormality and unit determinant.
    pub fn defect(&self) -> f64 {
        let ortho = (self.0 * self.0.transpose() - Matrix3::identity()).abs().max();
        let det = (self.0.determinant() - 1.0).abs();
        ortho.max(det)
    }
}

/// Rigid world-to-camera transform in SE(3): `p_c = R p_w + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    /// `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rot_inv = self.rotation.inverse();
        RigidTransform {
            rotation: rot_inv,
            translation: -rot_inv.rotate(&self.translation),
        }
    }

    /// Camera center in the world frame, `t_c^w = -R^T t`.
    pub fn camera_center(&self) -> Vector3<f64> {
        -self.rotation.inverse().rotate(&self.translation)
    }
}

/// Serialized form: unit quaternion (w, x, y, z) plus translation.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    q: [f64; 4],
    t: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let q = self.rotation.to_quaternion();
        PoseRepr {
            q: [q.w, q.i, q.j, q.k],
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(de)?;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(
            repr.q[0], repr.q[1], repr.q[2], repr.q[3],
        ));
        Ok(RigidTransform::new(
            Rotation::from_quaternion(&q),
            Vector3::new(repr.t[0], repr.t[1], repr.t[2]),
        ))
    }
}

/// Tangent vector `(rho, phi)` of SE(3); rho in meters, phi in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector(pub Vector6<f64>);

impl TangentVector {
    pub fn zero() -> Self {
        TangentVector(Vector6::zeros())
    }

    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        TangentVector(Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z))
    }

    pub fn rho(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn phi(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        TangentVector(self.0 * s)
    }
}

/// Skew-symmetric matrix `v^` with `v^ w = v x w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] on antisymmetric matrices.
fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues formula with Taylor fallback for small angles.
pub fn exp_so3(phi: &Vector3<f64>) -> Rotation {
    let theta = phi.norm();
    let k = skew(phi);
    // a = sin(theta)/theta, b = (1 - cos(theta))/theta^2; the half-angle
    // identity keeps b exact without cancellation.
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
    } else {
        let h = (0.5 * theta).sin();
        ((theta.sin()) / theta, 2.0 * h * h / (theta * theta))
    };
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Principal-branch rotation logarithm.
pub fn log_so3(r: &Rotation) -> Result<Vector3<f64>, LieError> {
    let m = r.matrix();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = vee(&(m - m.transpose())) * 0.5; // norm = sin(theta)
    let s = w.norm();
    let theta = s.atan2(c);
    if theta > std::f64::consts::PI - ANGLE_NEAR_PI_MARGIN {
        return Err(LieError::AngleNearPi {
            angle: theta,
            margin: ANGLE_NEAR_PI_MARGIN,
        });
    }
    if theta < SMALL_ANGLE {
        // w already approximates phi to O(theta^3).
        return Ok(w);
    }
    Ok(w * (theta / s))
}

/// `(theta - sin theta)/theta^3`, series below [`CUBIC_SERIES`].
fn theta_minus_sin_over_cubed(theta: f64) -> f64 {
    if theta < CUBIC_SERIES {
        1.0 / 6.0 - theta * theta / 120.0
    } else {
        (theta - theta.sin()) / (theta * theta * theta)
    }
}

/// Left Jacobian V of SO(3), so that exp_se3 translation = V * rho.
fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let b = if theta < SMALL_ANGLE {
        0.5 - theta * theta / 24.0
    } else {
        let h = (0.5 * theta).sin();
        2.0 * h * h / (theta * theta)
    };
    Matrix3::identity() + k * b + k * k * theta_minus_sin_over_cubed(theta)
}

fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let c = if theta < CUBIC_SERIES {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = 0.5 * theta;
        1.0 / (theta * theta) - half.cos() / (2.0 * theta * half.sin())
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Exponential map se(3) -> SE(3).
pub fn exp_se3(xi: &TangentVector) -> RigidTransform {
    let rho = xi.rho();
    let phi = xi.phi();
    RigidTransform {
        rotation: exp_so3(&phi),
        translation: so3_left_jacobian(&phi) * rho,
    }
}

/// Logarithm SE(3) -> se(3); requires the rotation angle below pi.
pub fn log_se3(t: &RigidTransform) -> Result<TangentVector, LieError> {
    let phi = log_so3(&t.rotation)?;
    let rho = so3_left_jacobian_inv(&phi) * t.translation;
    Ok(TangentVector::new(rho, phi))
}

/// d mu_c / d xi for a point mu_c already in the camera frame: `[I | -mu_c^]`.
pub fn d_mu_c_d_pose(mu_c: &Vector3<f64>) -> Matrix3x6<f64> {
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(mu_c)));
    j
}

/// d t_c^w / d xi for the camera center `t_c^w = -R^T t`: `[-R^T | 0]`.
///
/// The rotational block vanishes because the first-order rotation of both
/// R and t cancels in -R^T t.
pub fn d_camcenter_d_pose(t: &RigidTransform) -> Matrix3x6<f64> {
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-t.rotation.matrix().transpose()));
    j
}

/// d vec(R) / d xi with columns of R stacked: row-block j is `[0 | -r_j^]`.
pub fn d_rotation_d_pose(r: &Rotation) -> SMatrix<f64, 9, 6> {
    let mut j = SMatrix::<f64, 9, 6>::zeros();
    for col in 0..3 {
        let rc = r.matrix().column(col).into_owned();
        j.fixed_view_mut::<3, 3>(3 * col, 3).copy_from(&(-skew(&rc)));
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_tangent(rng: &mut ChaCha8Rng, rho_mag: f64, phi_mag: f64) -> TangentVector {
        let mut v = Vector6::zeros();
        for i in 0..3 {
            v[i] = rng.gen_range(-rho_mag..rho_mag);
            v[i + 3] = rng.gen_range(-phi_mag..phi_mag);
        }
        TangentVector(v)
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> RigidTransform {
        exp_se3(&random_tangent(rng, 2.0, 1.5))
    }

    #[test]
    fn skew_zero_and_definition() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let m = skew(&Vector3::new(1.0, 2.0, 3.0));
        let expect = Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(m, expect);
    }

    #[test]
    fn skew_matches_cross_product() {
        let v = Vector3::new(1.0, 0.0, 0.0);
        let w = Vector3::new(0.0, 1.0, 0.0);
        assert_eq!(skew(&v) * w, Vector3::new(0.0, 0.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let b = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            assert_relative_eq!(skew(&a) * b, a.cross(&b), epsilon = 1e-14);
            assert_relative_eq!(skew(&a) + skew(&a).transpose(), Matrix3::zeros());
        }
    }

    #[test]
    fn exp_identity_and_pure_translation() {
        let id = exp_se3(&TangentVector::zero());
        assert_eq!(id.rotation.matrix(), &Matrix3::identity());
        assert_eq!(id.translation, Vector3::zeros());

        let t = exp_se3(&TangentVector::new(
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::zeros(),
        ));
        assert_eq!(t.translation, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(t.rotation.matrix(), &Matrix3::identity());
    }

    #[test]
    fn exp_quarter_turn_matches_rodrigues_oracle() {
        // Independent Rodrigues evaluation for phi = (0,0,pi/2).
        let phi = Vector3::new(0.0, 0.0, FRAC_PI_2);
        let theta = phi.norm();
        let k = skew(&(phi / theta));
        let oracle = Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos());
        let r = exp_se3(&TangentVector::new(Vector3::zeros(), phi));
        assert_relative_eq!(r.rotation.matrix(), &oracle, epsilon = 1e-12);
        // 90 degrees about z maps x to y.
        assert_relative_eq!(
            r.rotation.rotate(&Vector3::x()),
            Vector3::y(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn exp_inverse_is_exp_of_negation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let xi = random_tangent(&mut rng, 2.0, 2.5);
            let t = exp_se3(&xi).compose(&exp_se3(&xi.scale(-1.0)));
            assert!(t.rotation.defect() < 1e-9);
            assert!((t.translation).norm() < 1e-9);
            assert!(t.rotation.angle() < 1e-9);
        }
    }

    #[test]
    fn log_identity_and_pure_translation() {
        let xi = log_se3(&RigidTransform::identity()).unwrap();
        assert_eq!(xi.0, Vector6::zeros());

        let t = RigidTransform::new(Rotation::identity(), Vector3::new(0.0, 2.0, 0.0));
        let xi = log_se3(&t).unwrap();
        assert_relative_eq!(xi.rho(), Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-14);
        assert_eq!(xi.phi(), Vector3::zeros());
    }

    #[test]
    fn log_rejects_angle_near_pi() {
        let r = exp_so3(&Vector3::new(PI - 1e-9, 0.0, 0.0));
        assert!(matches!(log_so3(&r), Err(LieError::AngleNearPi { .. })));
    }

    #[test]
    fn exp_log_round_trip_1000_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut max_err: f64 = 0.0;
        for _ in 0..1000 {
            let xi = random_tangent(&mut rng, 3.0, 1.73); // |phi| <= 3 elementwise bound
            let back = log_se3(&exp_se3(&xi)).unwrap();
            max_err = max_err.max((back.0 - xi.0).norm());
        }
        assert!(max_err < 1e-9, "round-trip max error {max_err}");
    }

    #[test]
    fn exp_log_round_trip_tiny_angles() {
        for scale in [1e-12, 1e-9, 1e-7, 1e-5] {
            let xi = TangentVector::new(
                Vector3::new(0.3, -0.2, 0.9) * scale,
                Vector3::new(-0.4, 0.8, 0.1) * scale,
            );
            let back = log_se3(&exp_se3(&xi)).unwrap();
            assert!((back.0 - xi.0).norm() <= 1e-9);
        }
    }

    #[test]
    fn group_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            let ab_c = a.compose(&b).compose(&c);
            let a_bc = a.compose(&b.compose(&c));
            assert_relative_eq!(ab_c.rotation.matrix(), a_bc.rotation.matrix(), epsilon = 1e-9);
            assert_relative_eq!(ab_c.translation, a_bc.translation, epsilon = 1e-9);

            let e = a.compose(&a.inverse());
            assert!(e.rotation.angle() < 1e-9);
            assert!(e.translation.norm() < 1e-9);
        }
    }

    /// Central finite difference of f under the left-multiplicative
    /// perturbation exp(eps e_k) * T, one column per tangent direction.
    fn fd_pose_jacobian<const N: usize>(
        t: &RigidTransform,
        f: impl Fn(&RigidTransform) -> SMatrix<f64, N, 1>,
        eps: f64,
    ) -> SMatrix<f64, N, 6> {
        let mut j = SMatrix::<f64, N, 6>::zeros();
        for k in 0..6 {
            let mut dir = Vector6::zeros();
            dir[k] = eps;
            let plus = exp_se3(&TangentVector(dir)).compose(t);
            let minus = exp_se3(&TangentVector(-dir)).compose(t);
            let col = (f(&plus) - f(&minus)) / (2.0 * eps);
            j.set_column(k, &col);
        }
        j
    }

    fn max_rel_err<const N: usize>(a: &SMatrix<f64, N, 6>, b: &SMatrix<f64, N, 6>) -> f64 {
        let denom = a.norm().max(b.norm()).max(1e-12);
        (a - b).norm() / denom
    }

    #[test]
    fn d_mu_c_blocks() {
        let j = d_mu_c_d_pose(&Vector3::zeros());
        assert_eq!(j.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::identity());
        assert_eq!(j.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::zeros());

        let mu = Vector3::new(0.0, 0.0, 1.0);
        let j = d_mu_c_d_pose(&mu);
        assert_eq!(j.fixed_view::<3, 3>(0, 3).into_owned(), -skew(&mu));
    }

    #[test]
    fn d_mu_c_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let t = random_pose(&mut rng);
            let p_w = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let analytic = d_mu_c_d_pose(&t.apply(&p_w));
            let fd = fd_pose_jacobian(&t, |tt| tt.apply(&p_w), 1e-6);
            worst = worst.max(max_rel_err(&analytic, &fd));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn d_camcenter_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let t = random_pose(&mut rng);
            let analytic = d_camcenter_d_pose(&t);
            let fd = fd_pose_jacobian(&t, |tt| tt.camera_center(), 1e-6);
            worst = worst.max(max_rel_err(&analytic, &fd));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn d_camcenter_identity_and_pure_rotation() {
        let j = d_camcenter_d_pose(&RigidTransform::identity());
        assert_eq!(
            j.fixed_view::<3, 3>(0, 0).into_owned(),
            -Matrix3::identity()
        );
        assert_eq!(j.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::zeros());

        // Pure rotation: translation columns map e_k -> -R^T e_k.
        let r = exp_so3(&Vector3::new(0.3, -0.7, 0.2));
        let t = RigidTransform::new(r, Vector3::zeros());
        let j = d_camcenter_d_pose(&t);
        for k in 0..3 {
            let col = j.column(k).into_owned();
            let expect = -r.matrix().transpose().column(k).into_owned();
            assert_relative_eq!(col, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn d_rotation_blocks_at_identity() {
        let j = d_rotation_d_pose(&Rotation::identity());
        for col in 0..3 {
            let mut e = Vector3::zeros();
            e[col] = 1.0;
            let block = j.fixed_view::<3, 3>(3 * col, 3).into_owned();
            assert_eq!(block, -skew(&e));
            // Translation columns are identically zero.
            assert_eq!(
                j.fixed_view::<3, 3>(3 * col, 0).into_owned(),
                Matrix3::zeros()
            );
        }
    }

    #[test]
    fn d_rotation_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let t = random_pose(&mut rng);
            let analytic = d_rotation_d_pose(&t.rotation);
            let fd = fd_pose_jacobian(&t, |tt| {
                let m = tt.rotation.matrix();
                let mut v = SMatrix::<f64, 9, 1>::zeros();
                for col in 0..3 {
                    for row in 0..3 {
                        v[3 * col + row] = m[(row, col)];
                    }
                }
                v
            }, 1e-6);
            worst = worst.max(max_rel_err(&analytic, &fd));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn d_rotation_translation_block_is_zero_for_any_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let r = random_pose(&mut rng).rotation;
            let j = d_rotation_d_pose(&r);
            let trans_block = j.fixed_view::<9, 3>(0, 0).into_owned();
            assert_eq!(trans_block.norm(), 0.0);
        }
    }
}
