//! Backward pass: photometric L1 loss and its gradient with respect to the
//! camera pose tangent, accumulated through three chains per splat:
//!
//! 1. loss -> pixel -> alpha -> projected mean -> camera-frame mean -> pose;
//! 2. loss -> pixel -> alpha -> projected covariance, both through the
//!    projection Jacobian's dependence on the camera-frame mean and through
//!    the rotation in `Sigma_I = (J R) Sigma_w (J R)^T`;
//! 3. loss -> pixel -> view color -> SH direction -> camera center -> pose.
//!
//! The per-pixel reverse scan recomputes the forward walk (same arithmetic
//! as the renderer via `splat_alpha`) into a scratch list, then unwinds it
//! with suffix sums. Per-splat gradients accumulate into fixed 8-row band
//! partials that reduce in band order, so parallel and sequential execution
//! are bit-identical.

use super::blur::{blur_adjoint, blur_image, BlurSpec};
use super::forward::{prepare_frame, render_from_frame, splat_alpha, FrameSplats, RenderOpts, BAND_H};
use super::{Camera, ImageBuffer, RenderError, ALPHA_MAX, TRANSMITTANCE_MIN};
use crate::lie::TangentVector;
use crate::scene::GaussianScene;
use nalgebra::{Matrix2, Vector2, Vector3, Vector6};

#[derive(Debug)]
pub struct GradOutput {
    /// Unblurred rendered image.
    pub image: ImageBuffer,
    /// L1 loss; between blurred images when a blur spec is given.
    pub loss: f64,
    /// d loss / d xi at xi = 0 for the left-multiplicative perturbation.
    pub grad: TangentVector,
}

#[derive(Clone, Copy)]
struct SplatGrad {
    d_mean: [f64; 2],
    /// dL/dSigma_I as a symmetric 2x2: (xx, xy, yy).
    d_cov: [f64; 3],
    d_color: [f64; 3],
}

impl SplatGrad {
    const ZERO: SplatGrad = SplatGrad {
        d_mean: [0.0; 2],
        d_cov: [0.0; 3],
        d_color: [0.0; 3],
    };

    #[inline]
    fn is_zero(&self) -> bool {
        self.d_mean == [0.0; 2] && self.d_cov == [0.0; 3] && self.d_color == [0.0; 3]
    }

    #[inline]
    fn add(&mut self, o: &SplatGrad) {
        for k in 0..2 {
            self.d_mean[k] += o.d_mean[k];
        }
        for k in 0..3 {
            self.d_cov[k] += o.d_cov[k];
            self.d_color[k] += o.d_color[k];
        }
    }
}

struct Contrib {
    si: u32,
    alpha: f64,
    w: f64,
    trans: f64,
    dx: f64,
    dy: f64,
}

/// Renders, evaluates the (optionally blurred) L1 loss against `target`,
/// and returns the analytic pose gradient.
pub fn render_with_pose_grad(
    scene: &GaussianScene,
    cam: &Camera,
    target: &ImageBuffer,
    blur: Option<&BlurSpec>,
    opts: &RenderOpts,
) -> Result<GradOutput, RenderError> {
    if target.width() != cam.width || target.height() != cam.height {
        return Err(RenderError::DimensionMismatch);
    }
    let frame = prepare_frame(scene, cam, true)?;
    let image = render_from_frame(&frame, cam, scene.background, opts);

    // dL/d(rendered pixel). Without blur it is the L1 sign scaled by the
    // mean normalization; with blur the sign image of the blurred residual
    // is pulled back through the exact blur transpose.
    let inv_n = 1.0 / image.data().len() as f64;
    let (loss, grad_image) = match blur {
        None => {
            let mut g = ImageBuffer::new(cam.width, cam.height);
            let mut loss = 0.0;
            for (gi, (r, t)) in g
                .data_mut()
                .iter_mut()
                .zip(image.data().iter().zip(target.data()))
            {
                let d = r - t;
                loss += d.abs();
                *gi = sign0(d) * inv_n;
            }
            (loss * inv_n, g)
        }
        Some(spec) => {
            let rb = blur_image(&image, spec);
            let tb = blur_image(target, spec);
            let mut s = ImageBuffer::new(cam.width, cam.height);
            let mut loss = 0.0;
            for (si, (r, t)) in s
                .data_mut()
                .iter_mut()
                .zip(rb.data().iter().zip(tb.data()))
            {
                let d = r - t;
                loss += d.abs();
                *si = sign0(d) * inv_n;
            }
            (loss * inv_n, blur_adjoint(&s, spec))
        }
    };

    let grad = pose_gradient(&frame, cam, scene.background, &grad_image, opts);
    Ok(GradOutput { image, loss, grad })
}

#[inline]
fn sign0(d: f64) -> f64 {
    // L1 subgradient with sign(0) = 0: perfect alignment is a fixed point.
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pose_gradient(
    frame: &FrameSplats,
    cam: &Camera,
    background: [f64; 3],
    grad_image: &ImageBuffer,
    opts: &RenderOpts,
) -> TangentVector {
    let n_splats = frame.splats.len();
    let h = cam.height;
    let n_bands = h.div_ceil(BAND_H) as usize;

    let band_acc = |b: usize| -> Vec<SplatGrad> {
        let y0 = b as u32 * BAND_H;
        let y1 = (y0 + BAND_H).min(h);
        let mut acc = vec![SplatGrad::ZERO; n_splats];
        let mut scratch: Vec<Contrib> = Vec::with_capacity(64);
        backward_rows(frame, cam, background, grad_image, y0, y1, &mut acc, &mut scratch);
        acc
    };

    #[cfg(feature = "parallel")]
    let bands: Vec<Vec<SplatGrad>> = if opts.parallel {
        use rayon::prelude::*;
        (0..n_bands).into_par_iter().map(band_acc).collect()
    } else {
        (0..n_bands).map(band_acc).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let bands: Vec<Vec<SplatGrad>> = {
        let _ = opts;
        (0..n_bands).map(band_acc).collect()
    };

    // Fixed-order reduction across bands.
    let mut total = vec![SplatGrad::ZERO; n_splats];
    for band in &bands {
        for (a, b) in total.iter_mut().zip(band) {
            a.add(b);
        }
    }

    chain_to_pose(frame, cam, &total)
}

#[allow(clippy::too_many_arguments)]
fn backward_rows(
    frame: &FrameSplats,
    cam: &Camera,
    background: [f64; 3],
    grad_image: &ImageBuffer,
    y0: u32,
    y1: u32,
    acc: &mut [SplatGrad],
    scratch: &mut Vec<Contrib>,
) {
    let w = cam.width as usize;
    let gdata = grad_image.data();
    for y in y0..y1 {
        let entries = frame.row(y);
        let py = y as f64 + 0.5;
        for x in 0..w {
            let px = x as f64 + 0.5;
            // Forward walk, recorded.
            scratch.clear();
            let mut t = 1.0f64;
            for &si in entries {
                let s = &frame.splats[si as usize];
                if let Some((alpha, wg, dx, dy)) = splat_alpha(s, x as i32, px, py) {
                    scratch.push(Contrib {
                        si,
                        alpha,
                        w: wg,
                        trans: t,
                        dx,
                        dy,
                    });
                    t *= 1.0 - alpha;
                    if t < TRANSMITTANCE_MIN {
                        break;
                    }
                }
            }
            if scratch.is_empty() {
                continue;
            }
            let o = (y as usize * w + x) * 3;
            let g = [gdata[o], gdata[o + 1], gdata[o + 2]];
            if g == [0.0; 3] {
                continue;
            }
            // Reverse scan with suffix sums. `suffix` holds the composited
            // color contributed by everything behind the current splat.
            let mut suffix = [background[0] * t, background[1] * t, background[2] * t];
            for c in scratch.iter().rev() {
                let s = &frame.splats[c.si as usize];
                let a = &mut acc[c.si as usize];
                let one_minus = 1.0 - c.alpha;
                let at = c.alpha * c.trans;
                let mut dalpha = 0.0;
                for ch in 0..3 {
                    dalpha += g[ch] * (c.trans * s.color[ch] - suffix[ch] / one_minus);
                    a.d_color[ch] += g[ch] * at;
                    suffix[ch] += s.color[ch] * at;
                }
                // Clamped alpha has zero geometry gradient.
                if s.opacity * c.w < ALPHA_MAX {
                    let dq = dalpha * s.opacity * (-0.5 * c.w);
                    let ux = s.inv[0] * c.dx + s.inv[1] * c.dy;
                    let uy = s.inv[1] * c.dx + s.inv[2] * c.dy;
                    let cm = -2.0 * dq;
                    a.d_mean[0] += cm * ux;
                    a.d_mean[1] += cm * uy;
                    let cc = -dq;
                    a.d_cov[0] += cc * ux * ux;
                    a.d_cov[1] += cc * ux * uy;
                    a.d_cov[2] += cc * uy * uy;
                }
            }
        }
    }
}

/// Chains per-splat image-space gradients into the 6-dof pose tangent.
fn chain_to_pose(frame: &FrameSplats, cam: &Camera, acc: &[SplatGrad]) -> TangentVector {
    let r = cam.pose.rotation.matrix();
    let mut g_rho = Vector3::zeros();
    let mut g_phi = Vector3::zeros();
    let mut d_tcw = Vector3::zeros();

    for (i, a) in acc.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        let bw = &frame.backward[i];
        let j = &bw.jac;

        // Mean chain.
        let dmean = Vector2::new(a.d_mean[0], a.d_mean[1]);
        let mut d_mu_c = j.transpose() * dmean;

        // Covariance chain, part A: Sigma_I depends on mu_c through J.
        let g2 = Matrix2::new(a.d_cov[0], a.d_cov[1], a.d_cov[1], a.d_cov[2]);
        let dldj = 2.0 * g2 * j * bw.sigma_c;
        let zi = 1.0 / bw.mu_c.z;
        let zi2 = zi * zi;
        let fx = cam.fx;
        let fy = cam.fy;
        d_mu_c.x += dldj[(0, 2)] * (-fx * zi2);
        d_mu_c.y += dldj[(1, 2)] * (-fy * zi2);
        d_mu_c.z += dldj[(0, 0)] * (-fx * zi2)
            + dldj[(1, 1)] * (-fy * zi2)
            + dldj[(0, 2)] * (2.0 * fx * bw.mu_c.x * zi2 * zi)
            + dldj[(1, 2)] * (2.0 * fy * bw.mu_c.y * zi2 * zi);

        // d mu_c / d xi = [I | -mu_c^]: rho takes d_mu_c, phi takes mu_c x d_mu_c.
        g_rho += d_mu_c;
        g_phi += bw.mu_c.cross(&d_mu_c);

        // Covariance chain, part B: rotation inside (J R) Sigma_w (J R)^T.
        if a.d_cov != [0.0; 3] {
            let jtgj = j.transpose() * g2 * j;
            let dldr = 2.0 * jtgj * bw.r_sigma_w;
            for col in 0..3 {
                let rc: Vector3<f64> = r.column(col).into_owned();
                let dc: Vector3<f64> = dldr.column(col).into_owned();
                g_phi += rc.cross(&dc);
            }
        }

        // Color chain: dL/d dir, then toward the camera center.
        let m = &bw.dcolor_ddir;
        let ddir = Vector3::new(
            a.d_color[0] * m[0][0] + a.d_color[1] * m[1][0] + a.d_color[2] * m[2][0],
            a.d_color[0] * m[0][1] + a.d_color[1] * m[1][1] + a.d_color[2] * m[2][1],
            a.d_color[0] * m[0][2] + a.d_color[1] * m[1][2] + a.d_color[2] * m[2][2],
        );
        if ddir != Vector3::zeros() {
            // d dir / d t_c^w = -(I - dir dir^T) / dist, symmetric.
            let proj = ddir - bw.dir * bw.dir.dot(&ddir);
            d_tcw -= proj * bw.inv_dist;
        }
    }

    // d t_c^w / d xi = [-R^T | 0].
    g_rho += -(r * d_tcw);

    TangentVector(Vector6::new(
        g_rho.x, g_rho.y, g_rho.z, g_phi.x, g_phi.y, g_phi.z,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::render;
    use crate::scene::{Gaussian3D, SynthSpec};
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_cam() -> Camera {
        Camera::new(
            80.0,
            80.0,
            32.0,
            32.0,
            64,
            64,
            crate::lie::RigidTransform::identity(),
            0.1,
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn perfect_alignment_is_stationary() {
        let (scene, cams) = crate::scene::synth_room(
            &SynthSpec {
                width: 64,
                height: 64,
                ..SynthSpec::default()
            },
            13,
        )
        .unwrap();
        let cam = &cams[0];
        let target = render(&scene, cam, &RenderOpts::default()).unwrap();
        let out = render_with_pose_grad(&scene, cam, &target, None, &RenderOpts::default()).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.norm() < 1e-7, "grad norm {}", out.grad.norm());
    }

    #[test]
    fn degree0_scene_has_no_color_chain() {
        // For a degree-0 scene the SH gradient is identically zero, so the
        // color chain contributes nothing: d_tcw path must be inert. We
        // check that by verifying the gradient is unchanged when all SH
        // direction gradients are zeroed -- which for degree 0 they are by
        // construction; the assert is that dcolor_ddir is exactly zero.
        let g = Gaussian3D::flat_colored(
            Vector3::new(0.05, -0.02, 1.2),
            Vector3::new(0.1, 0.1, 0.1),
            UnitQuaternion::identity(),
            0.8,
            [0.7, 0.3, 0.4],
        );
        let scene = GaussianScene::new(vec![g], [0.1; 3], 0);
        let cam = test_cam();
        let frame = prepare_frame(&scene, &cam, true).unwrap();
        for bw in &frame.backward {
            assert_eq!(bw.dcolor_ddir, [[0.0; 3]; 3]);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let scene = GaussianScene::new(
            vec![Gaussian3D::flat_colored(
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::new(0.1, 0.1, 0.1),
                UnitQuaternion::identity(),
                0.8,
                [0.5; 3],
            )],
            [0.0; 3],
            0,
        );
        let cam = test_cam();
        let target = ImageBuffer::new(32, 32);
        assert!(matches!(
            render_with_pose_grad(&scene, &cam, &target, None, &RenderOpts::default()),
            Err(RenderError::DimensionMismatch)
        ));
    }

    #[test]
    fn parallel_and_sequential_gradients_identical() {
        let (scene, cams) = crate::scene::synth_room(
            &SynthSpec {
                width: 64,
                height: 64,
                n_clutter: 16,
                ..SynthSpec::default()
            },
            17,
        )
        .unwrap();
        let cam = &cams[3];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut target = render(&scene, cam, &RenderOpts::default()).unwrap();
        for v in target.data_mut() {
            *v = (*v + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
        }
        let par = render_with_pose_grad(&scene, cam, &target, None, &RenderOpts::default()).unwrap();
        let seq = render_with_pose_grad(&scene, cam, &target, None, &RenderOpts::sequential()).unwrap();
        assert_eq!(par.loss, seq.loss);
        assert_eq!(par.grad.0, seq.grad.0);
        assert_eq!(par.image.data(), seq.image.data());
    }
}
