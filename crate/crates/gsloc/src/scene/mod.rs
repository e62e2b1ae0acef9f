//! The 3D Gaussian map: primitives, covariance construction, binary/JSON
//! persistence, and procedural synthetic-room generation.

mod io;
mod synth;

pub use io::{export_json, load_scene, save_scene};
pub use synth::{sample_query_cameras, synth_room, SynthSpec, WallTexture};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("format error at byte {offset}: {what}")]
    Format { offset: u64, what: String },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("invalid gaussian {index}: {what}")]
    InvalidGaussian { index: usize, what: String },
}

/// One anisotropic 3D Gaussian primitive.
///
/// The covariance is stored factored as `R(orient) * diag(scale^2) * R^T`,
/// which keeps it positive definite by construction. Spherical-harmonic
/// color coefficients are per-channel, `(degree+1)^2` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    /// Center in world coordinates, meters.
    pub center: Vector3<f64>,
    /// Per-axis standard deviations, meters; all positive.
    pub scale: Vector3<f64>,
    /// Orientation of the principal axes.
    pub orient: UnitQuaternion<f64>,
    /// Opacity in (0, 1).
    pub opacity: f64,
    /// SH coefficients, coefficient-major: `sh[k] = [r, g, b]`.
    pub sh: Vec<[f64; 3]>,
}

impl Gaussian3D {
    /// Degree-0 gaussian whose view-independent color is `rgb`.
    pub fn flat_colored(
        center: Vector3<f64>,
        scale: Vector3<f64>,
        orient: UnitQuaternion<f64>,
        opacity: f64,
        rgb: [f64; 3],
    ) -> Self {
        let sh0 = rgb.map(|c| (c - 0.5) / crate::render::SH_C0);
        Gaussian3D {
            center,
            scale,
            orient,
            opacity,
            sh: vec![sh0],
        }
    }

    pub fn validate(&self, sh_degree: u8) -> Result<(), String> {
        if !(self.scale.min() > 0.0) {
            return Err(format!("non-positive scale {:?}", self.scale));
        }
        if (self.orient.norm() - 1.0).abs() > 1e-6 {
            return Err("quaternion not normalized".into());
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(format!("opacity {} outside (0,1)", self.opacity));
        }
        let want = sh_coeff_count(sh_degree);
        if self.sh.len() != want {
            return Err(format!("expected {} sh coefficients, got {}", want, self.sh.len()));
        }
        if self
            .center
            .iter()
            .chain(self.scale.iter())
            .any(|v| !v.is_finite())
            || self.sh.iter().flatten().any(|v| !v.is_finite())
        {
            return Err("non-finite field".into());
        }
        Ok(())
    }
}

pub fn sh_coeff_count(degree: u8) -> usize {
    ((degree as usize) + 1) * ((degree as usize) + 1)
}

/// World covariance `R diag(scale^2) R^T` of a gaussian.
pub fn covariance_world(g: &Gaussian3D) -> Matrix3<f64> {
    let r = g.orient.to_rotation_matrix().into_inner();
    let d = Matrix3::from_diagonal(&g.scale.component_mul(&g.scale));
    r * d * r.transpose()
}

/// Immutable collection of gaussians plus background color.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub gaussians: Vec<Gaussian3D>,
    pub background: [f64; 3],
    pub sh_degree: u8,
}

impl GaussianScene {
    pub fn new(gaussians: Vec<Gaussian3D>, background: [f64; 3], sh_degree: u8) -> Self {
        GaussianScene {
            gaussians,
            background,
            sh_degree,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.sh_degree > 2 {
            return Err(SceneError::InvalidSpec(format!(
                "sh degree {} unsupported (max 2)",
                self.sh_degree
            )));
        }
        for (i, g) in self.gaussians.iter().enumerate() {
            g.validate(self.sh_degree)
                .map_err(|what| SceneError::InvalidGaussian { index: i, what })?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Axis-aligned bounds of the gaussian centers.
    pub fn center_bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = self.gaussians.first()?.center;
        let mut lo = first;
        let mut hi = first;
        for g in &self.gaussians {
            lo = lo.inf(&g.center);
            hi = hi.sup(&g.center);
        }
        Some((lo, hi))
    }
}
