//! Self-describing binary checkpoints.
//!
//! Layout (little-endian): magic, `u32` version, `u32` config length,
//! canonical config text, SHA-256 of that text, `u32` array count, then per
//! array `u16` name length, name, `u8` dtype (0 = f32), `u8` rank, `u64`
//! extents; finally the raw `f32` data of every array in declared order.

use std::io::{Read, Write};
use std::path::Path;

use mou_autograd::Tensor;
use sha2::{Digest, Sha256};

use super::{ModelConfig, MoUModel, MODEL_KEYS};
use crate::error::{MouError, Result};
use crate::params::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MOUCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

fn encode(model: &MoUModel<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    let text = model.config().canonical_text();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    buf.extend_from_slice(&Sha256::digest(text.as_bytes()));
    let params = model.params();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(DTYPE_F32);
        buf.push(t.ndim() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, t) in params.iter() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint(model: &MoUModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let out = |e| MouError::Output { path: path.to_path_buf(), source: e };
    let mut f = std::fs::File::create(path).map_err(out)?;
    f.write_all(&encode(model)).map_err(out)?;
    f.sync_all().map_err(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(MouError::Checkpoint(format!("truncated file while reading {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn decode(buf: &[u8]) -> Result<MoUModel<f32>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(MouError::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(MouError::Checkpoint(format!("unsupported version {version} (expected {CHECKPOINT_VERSION})")));
    }
    let len = c.u32("config length")? as usize;
    let text = std::str::from_utf8(c.take(len, "config")?)
        .map_err(|_| MouError::Checkpoint("config text is not UTF-8".into()))?
        .to_string();
    if c.take(32, "config hash")? != Sha256::digest(text.as_bytes()).as_slice() {
        return Err(MouError::Checkpoint("config hash mismatch: header is corrupt".into()));
    }
    let config = ModelConfig::from_canonical_text(&text).map_err(|e| MouError::Checkpoint(format!("stored config: {e}")))?;
    let count = c.u32("array count")? as usize;
    let mut table = Vec::with_capacity(count);
    for i in 0..count {
        let name_len = c.u16("array name")? as usize;
        let name = String::from_utf8(c.take(name_len, "array name")?.to_vec())
            .map_err(|_| MouError::Checkpoint(format!("array {i}: name is not UTF-8")))?;
        let dtype = c.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(MouError::Checkpoint(format!("array `{name}`: unsupported dtype {dtype}")));
        }
        let ndim = c.u8("rank")? as usize;
        let shape = (0..ndim).map(|_| c.u64("extent").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        table.push((name, shape));
    }
    let mut params = ParamStore::new();
    for (name, shape) in table {
        let n: usize = shape.iter().product();
        let raw = c.take(4 * n, &format!("data of `{name}`"))?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        params.add(name, Tensor::new(shape, data)?);
    }
    if c.pos != buf.len() {
        return Err(MouError::Checkpoint(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    MoUModel::from_params(config, params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MoUModel<f32>> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| MouError::io(path, e))?;
    decode(&buf)
}

impl MoUModel<f32> {
    /// Fails with the first field on which the stored configuration differs
    /// from `expected`.
    pub fn verify_config(&self, expected: &ModelConfig) -> Result<()> {
        for key in MODEL_KEYS {
            let (have, want) = (self.config().get(key), expected.get(key));
            if have != want {
                return Err(MouError::Checkpoint(format!(
                    "config mismatch in `{key}`: checkpoint has {}, expected {}",
                    have.unwrap_or_default(),
                    want.unwrap_or_default()
                )));
            }
        }
        Ok(())
    }
}
