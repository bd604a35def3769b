//! Multi-hierarchy token grids from images or token files, plus the
//! trainable residual adapter.

mod adapter;
mod builtin;
mod tokenfile;

pub use adapter::{adapt, adapt_backward, AdapterParams};
pub use builtin::{BuiltinTokenizer, Image};
pub use tokenfile::{
    decode_token_file, encode_token_file, load_token_file, write_token_file, TokenFile, TOKEN_FILE_MAGIC,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    #[default]
    Builtin,
    Imported,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    /// Pixels per token cell along each axis (`N^h`).
    pub downsample: usize,
    /// Backbone layer the grid came from, informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub mode: TokenizerMode,
    pub hierarchies: Vec<HierarchySpec>,
    pub channels: usize,
    /// `[H, W]`
    pub image_size: [usize; 2],
    pub mean: [f32; 3],
    pub std: [f32; 3],
    /// Seed of the frozen built-in projections.
    pub seed: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            mode: TokenizerMode::Builtin,
            hierarchies: [8, 16, 32]
                .into_iter()
                .map(|downsample| HierarchySpec {
                    downsample,
                    layer: None,
                })
                .collect(),
            channels: 16,
            image_size: [128, 128],
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
            seed: 0,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hierarchies.is_empty() {
            return Err(Error::InvalidArgument("at least one hierarchy is required".into()));
        }
        if self.channels == 0 {
            return Err(Error::InvalidArgument("channel count must be positive".into()));
        }
        if self.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("normalization std must be positive".into()));
        }
        if self.mode == TokenizerMode::Builtin {
            let [h, w] = self.image_size;
            for spec in &self.hierarchies {
                let n = spec.downsample;
                if n == 0 || h % n != 0 || w % n != 0 || h == 0 || w == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "image size {h}×{w} is not divisible by downsample {n}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Grid shape `(H/N, W/N)` of every hierarchy for the configured image size.
    pub fn grid_shapes(&self) -> Vec<(usize, usize)> {
        let [h, w] = self.image_size;
        self.hierarchies
            .iter()
            .map(|s| (h / s.downsample.max(1), w / s.downsample.max(1)))
            .collect()
    }
}
