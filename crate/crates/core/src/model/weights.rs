//! Little-endian binary weight files.
//!
//! ```text
//! magic        4 bytes  "STAN"
//! version      u32
//! arch         u32      0 = stan, 1 = unet
//! input_size   u32
//! base_filters u32
//! seed         u64
//! count        u32      number of tensor records
//! count x {
//!     name_len u32, name (UTF-8),
//!     rank u32, extents u32[rank],
//!     data f64[product(extents)]
//! }
//! ```
//!
//! Records alternate `<layer>.weight` / `<layer>.bias` in layer order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{trace, Arch, ConvParams, Model, ModelConfig};

pub const MAGIC: [u8; 4] = *b"STAN";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(model: &Model) -> Vec<u8> {
    let cfg = model.config();
    let mut buf = Vec::with_capacity(64 + model.param_count() * 8);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&cfg.arch.tag().to_le_bytes());
    buf.extend_from_slice(&(cfg.input_size as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.base_filters as u32).to_le_bytes());
    buf.extend_from_slice(&cfg.seed.to_le_bytes());
    buf.extend_from_slice(&((model.params().len() * 2) as u32).to_le_bytes());
    for p in model.params() {
        for (suffix, t) in [("weight", &p.weight), ("bias", &p.bias)] {
            let name = format!("{}.{suffix}", p.name);
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let tag = r.u32("arch")?;
    let arch = Arch::from_tag(tag).ok_or_else(|| Error::WeightMismatch(format!("unknown arch tag {tag}")))?;
    let input_size = r.u32("input_size")? as usize;
    let base_filters = r.u32("base_filters")? as usize;
    let seed = r.u64("seed")?;
    let config = ModelConfig { arch, input_size, base_filters, seed };
    let specs = trace(&config).map_err(|e| Error::WeightMismatch(e.to_string()))?.params;

    let count = r.u32("count")? as usize;
    if count != specs.len() * 2 {
        return Err(Error::WeightMismatch(format!(
            "{count} tensor records, config implies {}",
            specs.len() * 2
        )));
    }
    let mut read_tensor = |expected: &str| -> Result<Tensor> {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::WeightMismatch("tensor name is not UTF-8".into()))?;
        if name != expected {
            return Err(Error::WeightMismatch(format!("expected record {expected}, found {name}")));
        }
        let rank = r.u32("rank")? as usize;
        let shape = (0..rank).map(|_| r.u32("extents").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or(Error::Truncated("data"))?, "data")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Tensor::new(shape, data).map_err(|e| Error::WeightMismatch(format!("{name}: {e}")))
    };
    let mut params = Vec::with_capacity(specs.len());
    for spec in &specs {
        let weight = read_tensor(&format!("{}.weight", spec.name))?;
        let bias = read_tensor(&format!("{}.bias", spec.name))?;
        params.push(ConvParams { name: spec.name.clone(), kind: spec.kind, weight, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::WeightMismatch(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Model::from_params(config, params)
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
