//! `.vtok` token files.
//!
//! ```text
//! magic   "VARTOK1\0"                      8 bytes
//! version u32 = 1
//! H, W    u32, u32                         source image size
//! count   u32                              number of hierarchies
//! repeated count times:
//!   C, Hh, Wh  u32 × 3
//!   C·Hh·Wh f32, channel-major then row-major
//! ```
//!
//! Everything is little-endian; nothing follows the last hierarchy.

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::io::{checked_volume, put_f32s, put_u32, ByteReader};
use crate::sequencer::TokenGrid;

pub const TOKEN_FILE_MAGIC: &[u8; 8] = b"VARTOK1\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TokenFile {
    pub source_height: u32,
    pub source_width: u32,
    pub grids: Vec<TokenGrid<f32>>,
}

impl TokenFile {
    /// Checks the stored geometry against the expected hierarchy count and
    /// channel width.
    pub fn check(&self, hierarchies: usize, channels: usize) -> Result<(), FormatError> {
        if self.grids.len() != hierarchies {
            return Err(FormatError::HierarchyCountMismatch {
                expected: hierarchies,
                found: self.grids.len(),
            });
        }
        for (h, g) in self.grids.iter().enumerate() {
            if g.channels() != channels {
                return Err(FormatError::GridShapeMismatch {
                    hierarchy: h,
                    detail: format!("{} channels, expected {channels}", g.channels()),
                });
            }
        }
        Ok(())
    }

    pub fn grid_shapes(&self) -> Vec<(usize, usize)> {
        self.grids.iter().map(|g| (g.height(), g.width())).collect()
    }
}

pub fn encode_token_file(file: &TokenFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TOKEN_FILE_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, file.source_height);
    put_u32(&mut out, file.source_width);
    put_u32(&mut out, file.grids.len() as u32);
    for g in &file.grids {
        put_u32(&mut out, g.channels() as u32);
        put_u32(&mut out, g.height() as u32);
        put_u32(&mut out, g.width() as u32);
        put_f32s(&mut out, &g.to_channel_major());
    }
    out
}

pub fn decode_token_file(bytes: &[u8]) -> Result<TokenFile, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(TOKEN_FILE_MAGIC, "VARTOK1")?;
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let source_height = r.u32("header")?;
    let source_width = r.u32("header")?;
    let count = r.u32("header")? as usize;
    if count == 0 {
        return Err(FormatError::Malformed {
            what: "token file",
            detail: "zero hierarchies".into(),
        });
    }
    // Each hierarchy needs at least its 12-byte shape record.
    if count.saturating_mul(12) > r.remaining() {
        return Err(FormatError::Truncated("hierarchy table"));
    }
    let mut grids = Vec::with_capacity(count);
    for h in 0..count {
        let c = r.u32("hierarchy header")? as usize;
        let gh = r.u32("hierarchy header")? as usize;
        let gw = r.u32("hierarchy header")? as usize;
        if c == 0 || gh == 0 || gw == 0 {
            return Err(FormatError::GridShapeMismatch {
                hierarchy: h,
                detail: format!("empty grid {c}×{gh}×{gw}"),
            });
        }
        let n = checked_volume(&[c, gh, gw], "token grid")?;
        let data = r.f32s(n, FormatError::TruncatedTokens)?;
        let grid = TokenGrid::from_channel_major(c, gh, gw, &data).map_err(|e| FormatError::GridShapeMismatch {
            hierarchy: h,
            detail: e.to_string(),
        })?;
        let downsample = if gh > 0 && (source_height as usize).is_multiple_of(gh) {
            source_height as usize / gh
        } else {
            0
        };
        grids.push(grid.with_hierarchy(h, downsample));
    }
    r.finish()?;
    Ok(TokenFile {
        source_height,
        source_width,
        grids,
    })
}

pub fn write_token_file(path: impl AsRef<Path>, file: &TokenFile) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_token_file(file)).map_err(|e| Error::io(path, e))
}

pub fn load_token_file(path: impl AsRef<Path>) -> Result<TokenFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_token_file(&bytes)?)
}
