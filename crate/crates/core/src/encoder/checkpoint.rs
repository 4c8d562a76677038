//! Parameter checkpoints: a version-tagged binary container mapping group
//! names to shapes and f32 payloads, with the encoder config embedded.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::params::{Activation, EncoderConfig, ModelParams};
use crate::error::{EchoError, Result};

const MAGIC: &[u8; 6] = b"ECHOEA";
const VERSION: u16 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EchoError + '_ {
    move |source| EchoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &EncoderConfig, params: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, cfg.d_e as u32);
    put_u32(&mut buf, cfg.d_r as u32);
    buf.extend_from_slice(&cfg.dropout_rate.to_le_bytes());
    put_u32(&mut buf, cfg.pan_gcn_layers as u32);
    put_u32(&mut buf, cfg.pan_gat_layers as u32);
    put_str(&mut buf, cfg.activation.name());
    buf.push(cfg.use_pan as u8);
    buf.push(cfg.use_en as u8);
    buf.push(cfg.use_can as u8);

    let groups = params.groups();
    put_u32(&mut buf, groups.len() as u32);
    for (name, arr) in groups {
        put_str(&mut buf, &name);
        put_u32(&mut buf, arr.nrows() as u32);
        put_u32(&mut buf, arr.ncols() as u32);
        for &v in arr.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(EchoError::Parse {
                file: self.path.to_path_buf(),
                line: 0,
                message: "checkpoint truncated".into(),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.bytes(n)?.to_vec()).map_err(|_| EchoError::Parse {
            file: self.path.to_path_buf(),
            line: 0,
            message: "invalid utf8 in checkpoint".into(),
        })
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(EncoderConfig, ModelParams)> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(EchoError::MissingFile(path.to_path_buf()));
    }
    let mut data = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut data)
        .map_err(io_err(path))?;
    let mut r = Reader {
        data: &data,
        pos: 0,
        path,
    };
    if r.bytes(6)? != MAGIC {
        return Err(EchoError::Parse {
            file: path.to_path_buf(),
            line: 0,
            message: "not a checkpoint file (bad magic)".into(),
        });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(EchoError::Parse {
            file: path.to_path_buf(),
            line: 0,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let cfg = EncoderConfig {
        d_e: r.u32()? as usize,
        d_r: r.u32()? as usize,
        dropout_rate: r.f64()?,
        pan_gcn_layers: r.u32()? as usize,
        pan_gat_layers: r.u32()? as usize,
        activation: Activation::parse(&r.string()?)?,
        use_pan: r.bytes(1)?[0] != 0,
        use_en: r.bytes(1)?[0] != 0,
        use_can: r.bytes(1)?[0] != 0,
    };
    cfg.validate()?;

    let n_groups = r.u32()? as usize;
    let mut loaded = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let name = r.string()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let b: [u8; 4] = r.bytes(4)?.try_into().unwrap();
            values.push(f32::from_le_bytes(b) as f64);
        }
        let arr = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| EchoError::Numeric(format!("checkpoint group {name}: {e}")))?;
        loaded.push((name, arr));
    }

    // seed a correctly-shaped parameter set, then overwrite from the file
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut params = ModelParams::init(&cfg, &mut rng);
    params.assign_groups(&loaded)?;
    Ok((cfg, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn checkpoint_round_trips_at_f32_precision() {
        let cfg = EncoderConfig {
            d_e: 10,
            d_r: 4,
            ..Default::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let params = ModelParams::init(&cfg, &mut rng);
        let path = std::env::temp_dir().join(format!("echoea_ckpt_{}.bin", std::process::id()));
        save_checkpoint(&path, &cfg, &params).unwrap();
        let (cfg2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg, cfg2);
        for ((n1, a), (n2, b)) in params.groups().iter().zip(params2.groups().iter()) {
            assert_eq!(n1, n2);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= f32::EPSILON as f64 * x.abs().max(1.0));
            }
        }
        let _ = std::fs::remove_file(&path);
    }

    #[test]
    fn garbage_file_is_rejected() {
        let path = std::env::temp_dir().join(format!("echoea_junk_{}.bin", std::process::id()));
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
        let _ = std::fs::remove_file(&path);
    }
}
