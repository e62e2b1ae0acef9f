//! Procedural box-room synthesis: walls, floor and ceiling tiled with thin
//! colored gaussians, interior clutter blobs, and a ring of base cameras
//! looking across the room.
//!
//! Scenes are built at metric scale so the localization thresholds
//! (degrees / centimeters) stay meaningful.

use super::{Gaussian3D, GaussianScene, SceneError};
use crate::render::{Camera, SH_C0};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Wall color pattern.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WallTexture {
    /// Smooth low-frequency sinusoid mix plus small per-tile jitter.
    Noise,
    /// High-frequency periodic stripes; the photometric loss develops
    /// period-spaced local minima on such scenes.
    Stripes { period_m: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Interior room dimensions in meters (x, y, z-height).
    pub extent: [f64; 3],
    /// Wall tile spacing, meters.
    pub tile_step: f64,
    /// Tangential gaussian scale as a fraction of the tile spacing.
    pub tile_scale_frac: f64,
    /// Gaussian scale along the face normal, meters.
    pub tile_thickness: f64,
    pub n_clutter: usize,
    /// Floor-standing pillars (furniture stand-ins); each is a small stack
    /// of gaussians giving the views depth structure.
    pub n_pillars: usize,
    /// Number of base-trajectory cameras.
    pub n_base: usize,
    pub sh_degree: u8,
    pub texture: WallTexture,
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            extent: [3.2, 2.4, 2.2],
            tile_step: 0.22,
            tile_scale_frac: 0.45,
            tile_thickness: 0.01,
            n_clutter: 48,
            n_pillars: 6,
            n_base: 40,
            sh_degree: 1,
            texture: WallTexture::Noise,
            width: 240,
            height: 135,
            hfov_deg: 70.0,
            near: 0.05,
            far: 30.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.extent.iter().any(|e| *e <= 0.0) {
            return Err(SceneError::InvalidSpec("extent must be positive".into()));
        }
        if self.tile_step <= 0.0 || self.tile_scale_frac <= 0.0 || self.tile_thickness <= 0.0 {
            return Err(SceneError::InvalidSpec("tile geometry must be positive".into()));
        }
        if self.n_base == 0 {
            return Err(SceneError::InvalidSpec("need at least one base camera".into()));
        }
        if self.sh_degree > 2 {
            return Err(SceneError::InvalidSpec("sh degree must be 0..=2".into()));
        }
        Ok(())
    }

    /// Tile count per face, matching the generator's grid exactly.
    pub fn wall_tile_count(&self) -> usize {
        let [ex, ey, ez] = self.extent;
        let faces = [(ex, ey), (ex, ey), (ex, ez), (ex, ez), (ey, ez), (ey, ez)];
        faces
            .iter()
            .map(|(u, v)| grid_n(*u, self.tile_step) * grid_n(*v, self.tile_step))
            .sum()
    }
}

fn grid_n(extent: f64, step: f64) -> usize {
    ((extent / step).floor() as usize).max(1)
}

/// One axis-aligned face of the room box.
struct Face {
    origin: Vector3<f64>,   // face corner
    u_axis: Vector3<f64>,   // tangential, length = extent along u
    v_axis: Vector3<f64>,   // tangential, length = extent along v
    normal: Vector3<f64>,   // into the room
    base_color: [f64; 3],
    stripe_along_u: bool,
}

fn quat_z_to(normal: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(&Vector3::z(), normal)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI))
}

fn sh_from_color(rgb: [f64; 3], degree: u8, rng: &mut ChaCha8Rng, view_amp: f64) -> Vec<[f64; 3]> {
    let n = super::sh_coeff_count(degree);
    let mut sh = vec![[0.0; 3]; n];
    sh[0] = rgb.map(|c| (c - 0.5) / SH_C0);
    for coeff in sh.iter_mut().skip(1) {
        for ch in coeff.iter_mut() {
            *ch = rng.gen_range(-view_amp..view_amp);
        }
    }
    sh
}

/// Deterministic box-room scene plus a ring of base cameras.
pub fn synth_room(spec: &SynthSpec, seed: u64) -> Result<(GaussianScene, Vec<Camera>), SceneError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [ex, ey, ez] = spec.extent;
    let (hx, hy) = (ex * 0.5, ey * 0.5);

    let palette: [[f64; 3]; 6] = [
        [0.46, 0.38, 0.30], // floor
        [0.72, 0.72, 0.68], // ceiling
        [0.62, 0.32, 0.28], // y = -hy wall
        [0.30, 0.46, 0.62], // y = +hy wall
        [0.34, 0.56, 0.36], // x = -hx wall
        [0.58, 0.52, 0.26], // x = +hx wall
    ];

    let faces = [
        Face {
            origin: Vector3::new(-hx, -hy, 0.0),
            u_axis: Vector3::new(ex, 0.0, 0.0),
            v_axis: Vector3::new(0.0, ey, 0.0),
            normal: Vector3::z(),
            base_color: palette[0],
            stripe_along_u: true,
        },
        Face {
            origin: Vector3::new(-hx, -hy, ez),
            u_axis: Vector3::new(ex, 0.0, 0.0),
            v_axis: Vector3::new(0.0, ey, 0.0),
            normal: -Vector3::z(),
            base_color: palette[1],
            stripe_along_u: false,
        },
        Face {
            origin: Vector3::new(-hx, -hy, 0.0),
            u_axis: Vector3::new(ex, 0.0, 0.0),
            v_axis: Vector3::new(0.0, 0.0, ez),
            normal: Vector3::y(),
            base_color: palette[2],
            stripe_along_u: true,
        },
        Face {
            origin: Vector3::new(-hx, hy, 0.0),
            u_axis: Vector3::new(ex, 0.0, 0.0),
            v_axis: Vector3::new(0.0, 0.0, ez),
            normal: -Vector3::y(),
            base_color: palette[3],
            stripe_along_u: true,
        },
        Face {
            origin: Vector3::new(-hx, -hy, 0.0),
            u_axis: Vector3::new(0.0, ey, 0.0),
            v_axis: Vector3::new(0.0, 0.0, ez),
            normal: Vector3::x(),
            base_color: palette[4],
            stripe_along_u: true,
        },
        Face {
            origin: Vector3::new(hx, -hy, 0.0),
            u_axis: Vector3::new(0.0, ey, 0.0),
            v_axis: Vector3::new(0.0, 0.0, ez),
            normal: -Vector3::x(),
            base_color: palette[5],
            stripe_along_u: true,
        },
    ];

    let mut gaussians = Vec::new();
    for face in &faces {
        // Per-face smooth color field: three random sinusoid components.
        let mut waves = [[0.0f64; 4]; 3]; // fu, fv, phase, amplitude
        let mut dirs = [[0.0f64; 3]; 3];
        for k in 0..3 {
            waves[k] = [
                rng.gen_range(0.25..1.1),
                rng.gen_range(0.25..1.1),
                rng.gen_range(0.0..std::f64::consts::TAU),
                if k < 2 { rng.gen_range(0.05..0.11) } else { rng.gen_range(0.02..0.05) },
            ];
            if k == 2 {
                // One mid-frequency component for fine texture.
                waves[k][0] = rng.gen_range(2.0..4.0);
                waves[k][1] = rng.gen_range(2.0..4.0);
            }
            dirs[k] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
        }

        let eu = face.u_axis.norm();
        let ev = face.v_axis.norm();
        let (nu, nv) = (grid_n(eu, spec.tile_step), grid_n(ev, spec.tile_step));
        let (du, dv) = (eu / nu as f64, ev / nv as f64);
        let u_dir = face.u_axis / eu;
        let v_dir = face.v_axis / ev;
        let orient = quat_z_to(&face.normal);
        let scale = Vector3::new(
            spec.tile_scale_frac * du,
            spec.tile_scale_frac * dv,
            spec.tile_thickness,
        );

        for j in 0..nv {
            for i in 0..nu {
                let u = (i as f64 + 0.5) * du;
                let v = (j as f64 + 0.5) * dv;
                let center = face.origin + u_dir * u + v_dir * v;
                let mut color = face.base_color;
                match spec.texture {
                    WallTexture::Noise => {
                        for k in 0..3 {
                            let [fu, fv, ph, amp] = waves[k];
                            let s = (std::f64::consts::TAU * (fu * u + fv * v) + ph).sin();
                            for ch in 0..3 {
                                color[ch] += amp * s * dirs[k][ch];
                            }
                        }
                    }
                    WallTexture::Stripes { period_m, amplitude } => {
                        let coord = if face.stripe_along_u { u } else { v };
                        let s = (std::f64::consts::TAU * coord / period_m).sin();
                        for ch in color.iter_mut() {
                            *ch += amplitude * s;
                        }
                    }
                }
                for ch in color.iter_mut() {
                    *ch = (*ch + rng.gen_range(-0.02..0.02)).clamp(0.06, 0.94);
                }
                let opacity = rng.gen_range(0.88..0.97);
                gaussians.push(Gaussian3D {
                    center,
                    scale,
                    orient,
                    opacity,
                    sh: sh_from_color(color, spec.sh_degree, &mut rng, 0.03),
                });
            }
        }
    }

    // Interior clutter: chunky blobs inside a central box, kept away from
    // the camera ring. Their depth spread is what anchors the pose against
    // the rotation-translation ambiguity of a lone frontal wall.
    let clutter_h = 0.45;
    for _ in 0..spec.n_clutter {
        let center = Vector3::new(
            rng.gen_range(-clutter_h * hx..clutter_h * hx),
            rng.gen_range(-clutter_h * hy..clutter_h * hy),
            rng.gen_range(0.12 * ez..0.88 * ez),
        );
        let scale = Vector3::new(
            rng.gen_range(0.07..0.16f64),
            rng.gen_range(0.07..0.16f64),
            rng.gen_range(0.07..0.16f64),
        );
        let q = random_quat(&mut rng);
        let color = [
            rng.gen_range(0.15..0.85),
            rng.gen_range(0.15..0.85),
            rng.gen_range(0.15..0.85),
        ];
        let opacity = rng.gen_range(0.7..0.95);
        gaussians.push(Gaussian3D {
            center,
            scale,
            orient: q,
            opacity,
            sh: sh_from_color(color, spec.sh_degree, &mut rng, 0.03),
        });
    }

    // Pillars: vertical stacks from the floor, strong occluding edges.
    for _ in 0..spec.n_pillars {
        let x = rng.gen_range(-0.5 * hx..0.5 * hx);
        let y = rng.gen_range(-0.5 * hy..0.5 * hy);
        let height = rng.gen_range(0.35..0.75) * ez;
        let radius = rng.gen_range(0.07..0.12f64);
        let base_color = [
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.2..0.8),
        ];
        let n_seg = (height / (radius * 1.2)).ceil().max(2.0) as usize;
        for s in 0..n_seg {
            let z = (s as f64 + 0.5) * height / n_seg as f64;
            let shade = 0.85 + 0.3 * (s as f64 / n_seg.max(1) as f64);
            let color = base_color.map(|c| (c * shade).clamp(0.06, 0.94));
            gaussians.push(Gaussian3D {
                center: Vector3::new(x, y, z),
                scale: Vector3::new(radius, radius, height / (1.5 * n_seg as f64)),
                orient: UnitQuaternion::identity(),
                opacity: rng.gen_range(0.85..0.95),
                sh: sh_from_color(color, spec.sh_degree, &mut rng, 0.03),
            });
        }
    }

    let scene = GaussianScene::new(gaussians, [0.02, 0.02, 0.03], spec.sh_degree);
    scene.validate()?;

    // Base trajectory: ring near the walls, looking across the room with
    // sweeping yaw and pitch so all faces get covered.
    let mut cameras = Vec::with_capacity(spec.n_base);
    let hfov = spec.hfov_deg.to_radians();
    for i in 0..spec.n_base {
        let a = std::f64::consts::TAU * i as f64 / spec.n_base as f64;
        let eye = Vector3::new(
            0.68 * hx * a.cos(),
            0.68 * hy * a.sin(),
            ez * (0.45 + 0.18 * (3.0 * a + 0.7).sin()),
        );
        let sweep = 0.55 * (2.0 * a).sin();
        let target = Vector3::new(
            -0.35 * hx * (a + sweep).cos(),
            -0.35 * hy * (a + sweep).sin(),
            ez * (0.5 + 0.25 * (2.0 * a).cos()),
        );
        let pose = Camera::look_at_pose(&eye, &target, &Vector3::z());
        cameras.push(
            Camera::from_hfov(hfov, spec.width, spec.height, pose, spec.near, spec.far)
                .expect("synth camera is valid by construction"),
        );
    }

    Ok((scene, cameras))
}

/// Query cameras in the room interior, placed away from clutter so the view
/// is never blocked at point-blank range. Deterministic given the seed.
pub fn sample_query_cameras(
    spec: &SynthSpec,
    scene: &GaussianScene,
    seed: u64,
    n: usize,
) -> Vec<Camera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ab_77e3_9d24_0c1f);
    let [ex, ey, ez] = spec.extent;
    let (hx, hy) = (ex * 0.5, ey * 0.5);
    let hfov = spec.hfov_deg.to_radians();
    // Blobs (clutter) are the only non-thin gaussians.
    let blobs: Vec<&Gaussian3D> = scene
        .gaussians
        .iter()
        .filter(|g| g.scale.min() > 0.02)
        .collect();

    let mut cameras = Vec::with_capacity(n);
    let mut guard = 0;
    while cameras.len() < n && guard < 100_000 {
        guard += 1;
        let r = rng.gen_range(0.15..0.55f64);
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let eye = Vector3::new(
            r * hx * a.cos(),
            r * hy * a.sin(),
            rng.gen_range(0.35 * ez..0.70 * ez),
        );
        if blobs
            .iter()
            .any(|g| (g.center - eye).norm() < 0.25 + 2.5 * g.scale.max())
        {
            continue;
        }
        let b = rng.gen_range(0.0..std::f64::consts::TAU);
        let target = Vector3::new(
            hx * b.cos(),
            hy * b.sin(),
            rng.gen_range(0.3 * ez..0.8 * ez),
        );
        if (target - eye).norm() < 0.8 {
            continue;
        }
        let pose = Camera::look_at_pose(&eye, &target, &Vector3::z());
        cameras.push(
            Camera::from_hfov(hfov, spec.width, spec.height, pose, spec.near, spec.far)
                .expect("query camera is valid by construction"),
        );
    }
    cameras
}

fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    use rand_distr::StandardNormal;
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_same_seed_same_scene() {
        let spec = SynthSpec::default();
        let (a, cams_a) = synth_room(&spec, 7).unwrap();
        let (b, cams_b) = synth_room(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(cams_a.len(), cams_b.len());
        for (ca, cb) in cams_a.iter().zip(&cams_b) {
            assert_eq!(ca.pose.translation, cb.pose.translation);
        }
        let (c, _) = synth_room(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_clutter_count_matches_tiling_oracle() {
        let spec = SynthSpec {
            n_clutter: 0,
            n_pillars: 0,
            ..SynthSpec::default()
        };
        let (scene, _) = synth_room(&spec, 3).unwrap();
        // Independent tiling count: floor(extent/step) per tangential axis.
        let [ex, ey, ez] = spec.extent;
        let n = |e: f64| (e / spec.tile_step).floor().max(1.0) as usize;
        let oracle =
            2 * n(ex) * n(ey) + 2 * n(ex) * n(ez) + 2 * n(ey) * n(ez);
        assert_eq!(scene.len(), oracle);
        assert_eq!(scene.len(), spec.wall_tile_count());
    }

    #[test]
    fn scene_is_valid_and_metric_sized() {
        let (scene, cams) = synth_room(&SynthSpec::default(), 5).unwrap();
        scene.validate().unwrap();
        let (lo, hi) = scene.center_bounds().unwrap();
        assert!((hi - lo).x > 2.0 && (hi - lo).z > 1.5);
        assert_eq!(cams.len(), 40);
        for cam in &cams {
            assert!(cam.pose.rotation.defect() < 1e-12);
            // Cameras sit inside the room.
            let c = cam.center();
            assert!(c.x.abs() < 1.6 && c.y.abs() < 1.2 && c.z > 0.0 && c.z < 2.2);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = SynthSpec {
            extent: [0.0, 2.0, 2.0],
            ..SynthSpec::default()
        };
        assert!(synth_room(&bad, 1).is_err());
        let bad = SynthSpec {
            n_base: 0,
            ..SynthSpec::default()
        };
        assert!(synth_room(&bad, 1).is_err());
    }

    #[test]
    fn query_cameras_deterministic_and_inside() {
        let spec = SynthSpec::default();
        let (scene, _) = synth_room(&spec, 5).unwrap();
        let a = sample_query_cameras(&spec, &scene, 9, 8);
        let b = sample_query_cameras(&spec, &scene, 9, 8);
        assert_eq!(a.len(), 8);
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.pose.translation, cb.pose.translation);
        }
    }
}
