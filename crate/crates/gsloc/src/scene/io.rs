//! Scene persistence.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "GSCN"
//! 4       1     version (1)
//! 5       1     sh_degree (0..=2)
//! 6       2     reserved, zero
//! 8       24    background rgb, 3 x f64
//! 32      8     gaussian count, u64
//! 40      ...   records: center[3] scale[3] quat wxyz[4] opacity
//!               sh[3 * (deg+1)^2], all f64
//! ```
//!
//! f64 bits pass through untouched, so save/load round-trips bit-exactly.
//! A JSON sidecar export exists for debugging; it is not the authoritative
//! format and goes through shortest-round-trip float printing.

use super::{sh_coeff_count, Gaussian3D, GaussianScene, SceneError};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: [u8; 4] = *b"GSCN";
const VERSION: u8 = 1;

pub fn save_scene<P: AsRef<Path>>(scene: &GaussianScene, path: P) -> Result<(), SceneError> {
    let f = std::fs::File::create(path.as_ref()).map_err(io_err)?;
    let mut w = BufWriter::new(f);
    w.write_all(&MAGIC).map_err(io_err)?;
    w.write_all(&[VERSION, scene.sh_degree, 0, 0]).map_err(io_err)?;
    for c in scene.background {
        w.write_all(&c.to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&(scene.gaussians.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for g in &scene.gaussians {
        let q = g.orient.quaternion();
        let mut rec: Vec<f64> = Vec::with_capacity(11 + 3 * g.sh.len());
        rec.extend(g.center.iter());
        rec.extend(g.scale.iter());
        rec.extend([q.w, q.i, q.j, q.k]);
        rec.push(g.opacity);
        for c in &g.sh {
            rec.extend(c);
        }
        for v in rec {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_scene<P: AsRef<Path>>(path: P) -> Result<GaussianScene, SceneError> {
    let f = std::fs::File::open(path.as_ref()).map_err(io_err)?;
    let mut r = Reader {
        inner: BufReader::new(f),
        offset: 0,
    };
    let magic = r.bytes::<4>()?;
    if magic != MAGIC {
        return Err(SceneError::Format {
            offset: 0,
            what: format!("bad magic {magic:02x?}"),
        });
    }
    let head = r.bytes::<4>()?;
    if head[0] != VERSION {
        return Err(SceneError::Format {
            offset: 4,
            what: format!("unsupported version {}", head[0]),
        });
    }
    let sh_degree = head[1];
    if sh_degree > 2 {
        return Err(SceneError::Format {
            offset: 5,
            what: format!("sh degree {sh_degree} out of range"),
        });
    }
    let background = [r.f64()?, r.f64()?, r.f64()?];
    let count = u64::from_le_bytes(r.bytes::<8>()?) as usize;
    let n_coeff = sh_coeff_count(sh_degree);
    let mut gaussians = Vec::with_capacity(count.min(1 << 22));
    for _ in 0..count {
        let center = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
        let scale = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
        let q = Quaternion::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let opacity = r.f64()?;
        let mut sh = Vec::with_capacity(n_coeff);
        for _ in 0..n_coeff {
            sh.push([r.f64()?, r.f64()?, r.f64()?]);
        }
        gaussians.push(Gaussian3D {
            center,
            scale,
            // Bit preservation: the stored quaternion is already unit.
            orient: UnitQuaternion::new_unchecked(q),
            opacity,
            sh,
        });
    }
    Ok(GaussianScene::new(gaussians, background, sh_degree))
}

/// Human-readable JSON dump for debugging; lossy only in formatting.
pub fn export_json<P: AsRef<Path>>(scene: &GaussianScene, path: P) -> Result<(), SceneError> {
    #[derive(serde::Serialize)]
    struct JsonGaussian {
        center: [f64; 3],
        scale: [f64; 3],
        quat_wxyz: [f64; 4],
        opacity: f64,
        sh: Vec<[f64; 3]>,
    }
    #[derive(serde::Serialize)]
    struct JsonScene {
        sh_degree: u8,
        background: [f64; 3],
        gaussians: Vec<JsonGaussian>,
    }
    let doc = JsonScene {
        sh_degree: scene.sh_degree,
        background: scene.background,
        gaussians: scene
            .gaussians
            .iter()
            .map(|g| {
                let q = g.orient.quaternion();
                JsonGaussian {
                    center: g.center.into(),
                    scale: g.scale.into(),
                    quat_wxyz: [q.w, q.i, q.j, q.k],
                    opacity: g.opacity,
                    sh: g.sh.clone(),
                }
            })
            .collect(),
    };
    let f = std::fs::File::create(path.as_ref()).map_err(io_err)?;
    serde_json::to_writer_pretty(BufWriter::new(f), &doc)
        .map_err(|e| SceneError::Io(format!("json: {e}")))
}

fn io_err(e: std::io::Error) -> SceneError {
    SceneError::Io(e.to_string())
}

struct Reader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], SceneError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                SceneError::Format {
                    offset: self.offset,
                    what: "unexpected end of file".into(),
                }
            } else {
                io_err(e)
            }
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn f64(&mut self) -> Result<f64, SceneError> {
        Ok(f64::from_le_bytes(self.bytes::<8>()?))
    }
}
