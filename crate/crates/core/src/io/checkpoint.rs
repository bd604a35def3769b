//! Checkpoint container.
//!
//! ```text
//! magic    "VARCKPT1"                      8 bytes
//! version  u32 = 1
//! meta     u32 length + UTF-8 JSON          config echo and training state
//! count    u32                              number of tensors
//! repeated count times:
//!   name   u32 length + UTF-8 bytes
//!   rank   u32, then rank × u32 dimensions
//!   data   product(dims) × f32, row-major
//! ```
//!
//! All integers and floats are little-endian. Tensor names are unique and
//! written in a fixed order, so equal models produce byte-identical files.

use std::collections::HashSet;
use std::path::Path;

use super::{checked_volume, put_f32s, put_u32, ByteReader};
use crate::error::{Error, FormatError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VARCKPT1";
const VERSION: u32 = 1;
const MAX_RANK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, VERSION);
    let meta = serde_json::to_vec(&ckpt.meta).expect("json value serializes");
    put_u32(&mut out, meta.len() as u32);
    out.extend_from_slice(&meta);
    put_u32(&mut out, ckpt.tensors.len() as u32);
    for t in &ckpt.tensors {
        put_u32(&mut out, t.name.len() as u32);
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u32(&mut out, d as u32);
        }
        put_f32s(&mut out, &t.data);
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    let malformed = |detail: String| FormatError::Malformed {
        what: "checkpoint",
        detail,
    };
    let mut r = ByteReader::new(bytes);
    r.magic(CHECKPOINT_MAGIC, "VARCKPT1")?;
    let version = r.u32("checkpoint header")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let meta_len = r.u32("checkpoint header")? as usize;
    let meta = serde_json::from_slice(r.take(meta_len, "checkpoint metadata")?)
        .map_err(|e| malformed(format!("metadata: {e}")))?;
    let count = r.u32("checkpoint header")? as usize;
    if count.saturating_mul(8) > r.remaining() {
        return Err(FormatError::Truncated("tensor table"));
    }
    let mut tensors = Vec::with_capacity(count);
    let mut seen = HashSet::new();
    for _ in 0..count {
        let name_len = r.u32("tensor name")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| malformed("tensor name is not UTF-8".into()))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(malformed(format!("duplicate tensor {name}")));
        }
        let rank = r.u32("tensor shape")? as usize;
        if rank > MAX_RANK {
            return Err(malformed(format!("tensor {name} has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| r.u32("tensor shape").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = checked_volume(&shape, "tensor")?;
        let data = r.f32s(n, FormatError::Truncated("tensor payload"))?;
        tensors.push(NamedTensor { name, shape, data });
    }
    r.finish()?;
    Ok(Checkpoint { meta, tensors })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_checkpoint(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            meta: serde_json::json!({"epoch": 3, "config": {"m": 4}}),
            tensors: vec![
                NamedTensor {
                    name: "a.weight".into(),
                    shape: vec![2, 2],
                    data: vec![1.0, -2.0, 0.5, 8.0],
                },
                NamedTensor {
                    name: "scalar".into(),
                    shape: vec![],
                    data: vec![3.0],
                },
            ],
        }
    }

    #[test]
    fn round_trip_and_lookup() {
        let c = sample();
        let back = decode_checkpoint(&encode_checkpoint(&c)).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.get("scalar").unwrap().data, [3.0]);
        assert!(back.get("missing").is_none());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&sample());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[3] ^= 1;
        assert!(matches!(decode_checkpoint(&bad), Err(FormatError::BadMagic { .. })));
        let mut dup = sample();
        dup.tensors[1].name = "a.weight".into();
        assert!(decode_checkpoint(&encode_checkpoint(&dup)).is_err());
    }
}
