//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ACNC" | version: u32 | record*
//! record = name_len: u32 | name bytes | rank: u32 | dims: u32 × rank | values: f64 × Π dims
//! ```
//!
//! Records run to end of file.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{NnError, Result};
use crate::param::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ACNC";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        let shape = p.value.shape();
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in p.value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads every record as `(name, tensor)` in file order.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut records = Vec::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| NnError::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = cur.u32()? as usize;
        let shape = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let raw = cur.take(count * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, values).map_err(|e| NnError::Checkpoint(format!("{name}: {e}")))?;
        records.push((name, tensor));
    }
    Ok(records)
}

pub fn save(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(store, std::io::BufWriter::new(file))
}

/// Overwrites the values of `store` from a checkpoint. Every stored parameter must be
/// present with the same shape, and the file may not carry unknown names.
pub fn load_into(store: &mut ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let records = read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))?;
    restore(store, records)
}

pub fn restore(store: &mut ParamStore, records: Vec<(String, Tensor)>) -> Result<()> {
    if records.len() != store.len() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint has {} parameters, model expects {}",
            records.len(),
            store.len()
        )));
    }
    for (name, tensor) in records {
        let id = store.lookup(&name)?;
        let param = store.get_mut(id);
        if param.value.shape() != tensor.shape() {
            return Err(NnError::Checkpoint(format!(
                "{name}: shape {:?} does not match model shape {:?}",
                tensor.shape(),
                param.value.shape()
            )));
        }
        param.value = tensor;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
