//! `TCTC` checkpoint files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "TCTC" | version | config record | param count |
//!   per parameter: name length | name bytes | rank | extents.. | f32 LE values
//! ```
//!
//! The config record is: in_channels, base_width, num_enc_layers,
//! use_transformer (0/1), num_transformer_layers, num_heads, mlp_ratio (f64),
//! height, width, max_groups, norm_eps (f64).

use std::io::{Read, Write};
use std::path::Path;

use super::{Architecture, Model, ModelConfig, ParamStore};
use crate::autodiff::Tensor;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TCTC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint does not match architecture: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&[u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        self.u32(what).map(|v| v as usize)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode<F: Scalar>(model: &Model<F>) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [c.in_channels, c.base_width, c.num_enc_layers, c.use_transformer as usize, c.num_transformer_layers, c.num_heads] {
        put_u32(&mut out, v);
    }
    out.extend_from_slice(&c.mlp_ratio.to_le_bytes());
    for v in [c.height, c.width, c.max_groups] {
        put_u32(&mut out, v);
    }
    out.extend_from_slice(&c.norm_eps.to_le_bytes());
    let params = model.params();
    put_u32(&mut out, params.len());
    for (name, value) in params.names().iter().zip(params.values()) {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, value.rank());
        for &e in value.shape() {
            put_u32(&mut out, e);
        }
        for v in value.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode<F: Scalar>(bytes: &[u8]) -> Result<Model<F>, CheckpointError> {
    let mut r = Reader { buf: bytes };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config = ModelConfig {
        in_channels: r.usize("config")?,
        base_width: r.usize("config")?,
        num_enc_layers: r.usize("config")?,
        use_transformer: r.u32("config")? != 0,
        num_transformer_layers: r.usize("config")?,
        num_heads: r.usize("config")?,
        mlp_ratio: r.f64("config")?,
        height: r.usize("config")?,
        width: r.usize("config")?,
        max_groups: r.usize("config")?,
        norm_eps: r.f64("config")?,
    };
    let arch = Architecture::new(config).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let count = r.usize("parameter count")?;
    if count != arch.specs().len() {
        return Err(CheckpointError::Mismatch(format!(
            "{count} tensors stored, architecture has {}",
            arch.specs().len()
        )));
    }
    let mut names = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for spec in arch.specs() {
        let len = r.usize("name length")?;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| CheckpointError::Corrupt("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.usize("rank")?;
        if rank > 8 {
            return Err(CheckpointError::Corrupt(format!("implausible rank {rank} for `{name}`")));
        }
        let shape = (0..rank).map(|_| r.usize("extents")).collect::<Result<Vec<_>, _>>()?;
        if name != spec.name || shape != spec.shape {
            return Err(CheckpointError::Mismatch(format!(
                "found `{name}` {shape:?}, expected `{}` {:?}",
                spec.name, spec.shape
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| F::lit(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
            .collect();
        values.push(Tensor::new(shape, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?);
        names.push(name);
    }
    if !r.buf.is_empty() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(Model::from_parts(arch, ParamStore::from_parts(names, values)).expect("layout verified"))
}

pub fn save<F: Scalar>(model: &Model<F>, path: &Path) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(model))?;
    Ok(())
}

pub fn load<F: Scalar>(path: &Path) -> Result<Model<F>, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
