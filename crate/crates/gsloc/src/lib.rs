//! Differentiable 3D Gaussian splatting for camera-pose localization.
//!
//! The crate renders a scene of anisotropic 3D Gaussians with depth-ordered
//! alpha blending, backpropagates the photometric loss to the camera pose on
//! the SE(3) manifold, and recovers 6-DoF poses by Adam descent with an
//! optional coarse-to-fine blur schedule. Supporting modules provide the
//! scene format and procedural room synthesis, voxel-based 3D IoU frame
//! proximity, global-descriptor image retrieval, and a benchmark harness.

pub mod harness;
pub mod lie;
pub mod optimize;
pub mod proximity;
pub mod render;
pub mod retrieval;
pub mod scene;

pub use lie::{RigidTransform, Rotation, TangentVector};
pub use render::{Camera, ImageBuffer};
pub use scene::{Gaussian3D, GaussianScene};
