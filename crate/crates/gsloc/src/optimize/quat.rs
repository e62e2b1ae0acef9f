//! Quaternion + translation pose parametrization (the ablation variant).
//!
//! The renderer produces the gradient on the SE(3) tangent; this module
//! chains it onto the raw quaternion components through the local parameter
//! map `q -> R(q / |q|)` and renormalizes after every step. The chain is
//! validated against finite differences in the tests.

use crate::lie::{RigidTransform, Rotation, TangentVector};
use nalgebra::{Matrix3, Quaternion, SVector, UnitQuaternion, Vector3};

/// Raw parameter block: quaternion (w, x, y, z) then translation.
pub type QuatTransParams = SVector<f64, 7>;

pub fn params_from_pose(pose: &RigidTransform) -> QuatTransParams {
    let q = pose.rotation.to_quaternion();
    SVector::<f64, 7>::from_column_slice(&[
        q.w,
        q.i,
        q.j,
        q.k,
        pose.translation.x,
        pose.translation.y,
        pose.translation.z,
    ])
}

pub fn pose_from_params(p: &QuatTransParams) -> RigidTransform {
    let q = UnitQuaternion::from_quaternion(Quaternion::new(p[0], p[1], p[2], p[3]));
    RigidTransform::new(
        Rotation::from_quaternion(&q),
        Vector3::new(p[4], p[5], p[6]),
    )
}

pub fn renormalize(p: &mut QuatTransParams) {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt();
    for i in 0..4 {
        p[i] /= n;
    }
}

/// d R / d q_hat component matrices for a unit quaternion (w, x, y, z).
fn rotation_derivatives(q: &[f64; 4]) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dx = Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dy = Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dz = Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;
    [dw, dx, dy, dz]
}

/// Chains the SE(3) tangent gradient onto the raw (q, t) parameters,
/// including the normalization projector `I - q q^T`.
pub fn chain_tangent_to_params(
    grad: &TangentVector,
    params: &QuatTransParams,
    pose: &RigidTransform,
) -> QuatTransParams {
    let g_rho = grad.rho();
    let g_phi = grad.phi();
    let r = pose.rotation.matrix();
    let q = [params[0], params[1], params[2], params[3]];
    let dr = rotation_derivatives(&q);

    let mut out = QuatTransParams::zeros();
    // A pure translation offset is exactly a left-multiplicative rho.
    out[4] = g_rho.x;
    out[5] = g_rho.y;
    out[6] = g_rho.z;

    // A rotation-only parameter change (R -> exp(phi^) R with t fixed) is
    // the left-multiplicative tangent (rho, phi) = (-phi x t, phi), so the
    // effective rotational gradient picks up a translation cross term.
    let g_phi_eff = g_phi - pose.translation.cross(&g_rho);

    // dL/dq_k = g_phi_eff . vee( (dR/dq_k) R^T ), projected through I - q q^T.
    let mut raw = [0.0f64; 4];
    for k in 0..4 {
        let m = dr[k] * r.transpose();
        let phi_dir = Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]);
        raw[k] = g_phi_eff.dot(&phi_dir);
    }
    let dot: f64 = (0..4).map(|j| raw[j] * q[j]).sum();
    for k in 0..4 {
        out[k] = raw[k] - q[k] * dot;
    }
    out
}
