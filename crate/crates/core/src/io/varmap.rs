//! Raw anomaly-map export: `"VARMAP1\0"`, `u32 H`, `u32 W`, then `H·W`
//! little-endian f32 scores in row-major order.

use std::path::Path;

use super::{checked_volume, put_f32s, put_u32, ByteReader};
use crate::error::{Error, FormatError, Result};

pub const VARMAP_MAGIC: &[u8; 8] = b"VARMAP1\0";

#[derive(Clone, Debug, PartialEq)]
pub struct RawMap {
    pub height: usize,
    pub width: usize,
    pub scores: Vec<f32>,
}

pub fn encode_varmap(map: &RawMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * map.scores.len());
    out.extend_from_slice(VARMAP_MAGIC);
    put_u32(&mut out, map.height as u32);
    put_u32(&mut out, map.width as u32);
    put_f32s(&mut out, &map.scores);
    out
}

pub fn decode_varmap(bytes: &[u8]) -> Result<RawMap, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(VARMAP_MAGIC, "VARMAP1")?;
    let height = r.u32("map header")? as usize;
    let width = r.u32("map header")? as usize;
    let n = checked_volume(&[height, width], "anomaly map")?;
    let scores = r.f32s(n, FormatError::Truncated("map payload"))?;
    r.finish()?;
    Ok(RawMap { height, width, scores })
}

pub fn write_varmap(path: impl AsRef<Path>, map: &RawMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_varmap(map)).map_err(|e| Error::io(path, e))
}

pub fn read_varmap(path: impl AsRef<Path>) -> Result<RawMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_varmap(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_and_round_trip() {
        let m = RawMap {
            height: 2,
            width: 3,
            scores: vec![0.0, 1.0, 2.5, 3.0, 4.0, 5.0],
        };
        let bytes = encode_varmap(&m);
        assert_eq!(&bytes[..8], b"VARMAP1\0");
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &2.5f32.to_le_bytes());
        assert_eq!(decode_varmap(&bytes).unwrap(), m);
        assert!(decode_varmap(&bytes[..bytes.len() - 1]).is_err());
    }
}
