//! Forward splatting rasterizer and the backward pass that turns the
//! photometric loss into a camera-pose gradient.

mod backward;
mod blur;
mod camera;
mod forward;
mod image;
mod project;
mod sh;

pub use backward::{render_with_pose_grad, GradOutput};
pub use blur::{blur_image, BlurSpec};
pub use camera::Camera;
pub use forward::{photometric_loss, render, render_depth, RenderOpts};
pub use image::ImageBuffer;
pub use project::{perspective_jacobian, project_gaussian, transform_to_camera, Projection, Splat2D};
pub use sh::{sh_eval, sh_eval_with_grad, SH_C0};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("gaussian mean is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("scene has no gaussians")]
    EmptyScene,
    #[error("image dimensions do not match")]
    DimensionMismatch,
    #[error("i/o: {0}")]
    Io(String),
}

/// Skip blend contributions below this alpha.
pub const ALPHA_CUTOFF: f64 = 1.0 / 255.0;
/// Clamp alpha at this value so transmittance never reaches zero.
pub const ALPHA_MAX: f64 = 0.99;
/// Stop blending once transmittance falls below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Isotropic dilation added to projected covariances, in pixels^2.
pub const COV_DILATION: f64 = 0.3;
