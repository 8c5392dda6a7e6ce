//! Versioned binary checkpoint.
//!
//! All integers and reals are little endian.
//!
//! ```text
//! magic            4 bytes   "TUDM"
//! version          u32       1
//! ambient D        u64
//! intrinsic d′     u64
//! schedule tag     u8        0 conventional, 1 uniform radial,
//!                            2 late expansion, 3 OT geodesic
//! beta_min         f64       0 unless conventional
//! beta_max         f64       0 unless conventional
//! steps T          u64
//! ortho flag       u8        0 or 1; when 1:
//!   direction      D × f64
//!   delta          f64
//!   class count    u64
//!   classes        count × D × f64
//! layer count L    u64       number of affine layers
//! layer sizes      (L+1) × u64
//! parameters       per layer: weight (fan_in × fan_out, row-major) then
//!                  bias (fan_out), all f64
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use crate::diffusion::OrthoTimeConfig;
use crate::error::{Error, Result};
use crate::geometry::AmbientConfig;
use crate::model::{DenoiserModel, Layer};
use crate::schedule::{ScheduleKind, ScheduleSpec};

pub const MAGIC: &[u8; 4] = b"TUDM";
pub const VERSION: u32 = 1;

/// Refuse absurd sizes from corrupt headers before allocating.
const MAX_DIM: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub ambient: AmbientConfig,
    pub schedule: ScheduleSpec,
    pub ortho: Option<OrthoTimeConfig>,
    pub model: DenoiserModel,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        put_u64(&mut w, self.ambient.ambient_dim() as u64)?;
        put_u64(&mut w, self.ambient.intrinsic_dim() as u64)?;
        let (tag, bmin, bmax) = match self.schedule.kind() {
            ScheduleKind::ConventionalVp { beta_min, beta_max } => (0u8, beta_min, beta_max),
            ScheduleKind::UniformRadialVp => (1, 0.0, 0.0),
            ScheduleKind::LateExpansionVp => (2, 0.0, 0.0),
            ScheduleKind::OtGeodesic => (3, 0.0, 0.0),
        };
        w.write_all(&[tag])?;
        put_f64(&mut w, bmin)?;
        put_f64(&mut w, bmax)?;
        put_u64(&mut w, self.schedule.steps() as u64)?;
        match &self.ortho {
            None => w.write_all(&[0])?,
            Some(o) => {
                w.write_all(&[1])?;
                for &v in o.direction() {
                    put_f64(&mut w, v)?;
                }
                put_f64(&mut w, o.delta())?;
                let classes = o.class_directions().unwrap_or(&[]);
                put_u64(&mut w, classes.len() as u64)?;
                for d in classes {
                    for &v in d {
                        put_f64(&mut w, v)?;
                    }
                }
            }
        }
        let layers = self.model.layers();
        put_u64(&mut w, layers.len() as u64)?;
        for s in self.model.layer_sizes() {
            put_u64(&mut w, s as u64)?;
        }
        for l in layers {
            for &v in l.weight.iter() {
                put_f64(&mut w, v)?;
            }
            for &v in l.bias.iter() {
                put_f64(&mut w, v)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic {:?}, expected \"TUDM\"",
                String::from_utf8_lossy(&magic)
            )));
        }
        let mut ver = [0u8; 4];
        read_exact(&mut r, &mut ver)?;
        let version = u32::from_le_bytes(ver);
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}, this build reads {VERSION}"
            )));
        }
        let dim = get_size(&mut r, "ambient dimension")?;
        let intrinsic = get_size(&mut r, "intrinsic dimension")?;
        let ambient = AmbientConfig::new(dim, intrinsic).map_err(corrupt)?;
        let tag = get_u8(&mut r)?;
        let bmin = get_f64(&mut r)?;
        let bmax = get_f64(&mut r)?;
        let kind = match tag {
            0 => ScheduleKind::ConventionalVp {
                beta_min: bmin,
                beta_max: bmax,
            },
            1 => ScheduleKind::UniformRadialVp,
            2 => ScheduleKind::LateExpansionVp,
            3 => ScheduleKind::OtGeodesic,
            t => return Err(Error::Checkpoint(format!("unknown schedule tag {t}"))),
        };
        let steps = get_size(&mut r, "step count")?;
        let schedule = ScheduleSpec::new(kind, steps).map_err(corrupt)?;
        let ortho = match get_u8(&mut r)? {
            0 => None,
            1 => {
                let direction = get_vec(&mut r, dim)?;
                let delta = get_f64(&mut r)?;
                let count = get_size(&mut r, "class count")?;
                let classes = if count == 0 {
                    None
                } else {
                    Some((0..count).map(|_| get_vec(&mut r, dim)).collect::<Result<Vec<_>>>()?)
                };
                Some(OrthoTimeConfig::new(direction, delta, classes, intrinsic).map_err(corrupt)?)
            }
            f => return Err(Error::Checkpoint(format!("bad ortho flag {f}"))),
        };
        let count = get_size(&mut r, "layer count")?;
        let sizes = (0..=count)
            .map(|_| get_size(&mut r, "layer size"))
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(count);
        for w in sizes.windows(2) {
            let weight = Array2::from_shape_vec((w[0], w[1]), get_vec(&mut r, w[0] * w[1])?.to_vec())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let bias = get_vec(&mut r, w[1])?;
            layers.push(Layer { weight, bias });
        }
        let model = DenoiserModel::from_layers(layers).map_err(corrupt)?;
        if model.input_dim() != dim || model.output_dim() != dim {
            return Err(Error::Checkpoint(format!(
                "model widths {:?} do not match ambient dimension {dim}",
                model.layer_sizes()
            )));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(Checkpoint {
            ambient,
            schedule,
            ortho,
            model,
        })
    }
}

fn corrupt(e: Error) -> Error {
    Error::Checkpoint(e.to_string())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated file".into()),
        _ => Error::Io(e),
    })
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_size<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = get_u64(r)?;
    if v > MAX_DIM {
        return Err(Error::Checkpoint(format!("implausible {what} {v}")));
    }
    Ok(v as usize)
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_vec<R: Read>(r: &mut R, len: usize) -> Result<Array1<f64>> {
    let mut bytes = vec![0u8; len * 8];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_checkpoint(classes: usize) -> Checkpoint {
        let ambient = AmbientConfig::new(6, 2).unwrap();
        let ortho = if classes > 0 {
            Some(OrthoTimeConfig::class_axes(&ambient, 0.4, classes).unwrap())
        } else {
            None
        };
        Checkpoint {
            ambient,
            schedule: ScheduleSpec::new(ScheduleKind::conventional(), 12).unwrap(),
            ortho,
            model: DenoiserModel::init(&[6, 5, 6], 3).unwrap(),
        }
    }

    #[test]
    fn round_trip_bit_exact() {
        for classes in [0, 3] {
            let ck = sample_checkpoint(classes);
            let mut buf = Vec::new();
            ck.write_to(&mut buf).unwrap();
            assert_eq!(&buf[..4], b"TUDM");
            assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
            let back = Checkpoint::read_from(&buf[..]).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.ortho.as_ref().map_or(0, |o| o.num_classes()), classes);
        }
    }

    #[test]
    fn corrupt_inputs() {
        let ck = sample_checkpoint(0);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        let err = Checkpoint::read_from(&bad[..]).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");

        let mut bad = buf.clone();
        bad[4] = 9;
        let err = Checkpoint::read_from(&bad[..]).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");

        let err = Checkpoint::read_from(&buf[..buf.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");

        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(Checkpoint::read_from(&long[..]), Err(Error::Checkpoint(_))));
    }
}
