//! Run configuration: built-in defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use varad_core::pipeline::ModelConfig;
use varad_core::tokenizer::TokenizerConfig;
use varad_core::trainer::TrainConfig;

use crate::error::usage;

/// Where token grids come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TokenSource {
    /// Token files when any `.vtok` sits beside the images, else built-in.
    #[default]
    Auto,
    Builtin,
    Imported,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub dataset: PathBuf,
    pub category: String,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub tokens: TokenSource,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            category: "synth0".into(),
            out: PathBuf::from("runs"),
            checkpoint: None,
            threads: 0,
            tokens: TokenSource::Auto,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tokenizer: TokenizerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub run: RunSection,
}

/// Flag values; `None` leaves the configured value alone.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file with `tokenizer`, `model`, `train` and `run` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset root in MVTec layout.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Category folder under the dataset root.
    #[arg(long, global = true)]
    pub category: Option<String>,
    /// Checkpoint to score with, or to resume training from.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for initialization, data order and `synth`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Token source: the built-in tokenizer or `.vtok` files.
    #[arg(long, global = true, value_enum)]
    pub tokens: Option<TokenSource>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.dataset {
            self.run.dataset = v.clone();
        }
        if let Some(v) = &o.category {
            self.run.category = v.clone();
        }
        if let Some(v) = &o.checkpoint {
            self.run.checkpoint = Some(v.clone());
        }
        if let Some(v) = &o.out {
            self.run.out = v.clone();
        }
        if let Some(v) = o.seed {
            self.train.seed = v;
        }
        if let Some(v) = o.threads {
            self.run.threads = v;
        }
        if let Some(v) = o.tokens {
            self.run.tokens = v;
        }
    }

    /// Defaults, then the file named by `--config`, then the flags.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        cfg.apply(o);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |r: varad_core::Result<()>| r.map_err(|e| usage(format!("invalid config: {e}")));
        check(self.tokenizer.validate())?;
        check(self.train.validate())?;
        Ok(())
    }
}

/// Dotted paths of every leaf that differs between two JSON documents.
pub fn differing_fields(a: &Value, b: &Value) -> Vec<String> {
    fn walk(a: &Value, b: &Value, path: &str, out: &mut Vec<String>) {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let child = if path.is_empty() {
                        k.clone()
                    } else {
                        format!("{path}.{k}")
                    };
                    walk(
                        x.get(k).unwrap_or(&Value::Null),
                        y.get(k).unwrap_or(&Value::Null),
                        &child,
                        out,
                    );
                }
            }
            _ if a != b => out.push(path.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(a, b, "", &mut out);
    out
}
