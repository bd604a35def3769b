//! Binary containers: checkpoints and anomaly maps. The token-file codec
//! lives with the tokenizer.

pub mod checkpoint;
pub mod varmap;

use crate::error::FormatError;

/// Little-endian cursor that never reads past the end of its buffer.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated(what));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &'static [u8; 8], name: &'static str) -> Result<(), FormatError> {
        match self.take(8, "header") {
            Ok(m) if m == expected => Ok(()),
            _ => Err(FormatError::BadMagic { expected: name }),
        }
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32s(&mut self, count: usize, truncated: FormatError) -> Result<Vec<f32>, FormatError> {
        let bytes = count.checked_mul(4).ok_or(FormatError::Oversized("payload"))?;
        if self.remaining() < bytes {
            return Err(truncated);
        }
        let raw = &self.buf[self.pos..self.pos + bytes];
        self.pos += bytes;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn finish(self) -> Result<(), FormatError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Product of dimensions, rejecting overflow.
pub(crate) fn checked_volume(dims: &[usize], what: &'static str) -> Result<usize, FormatError> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(FormatError::Oversized(what))
}
