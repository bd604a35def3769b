//! The five commands. Each returns a summary for the caller to print or test.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;
use varad_core::io::checkpoint::{read_checkpoint, write_checkpoint};
use varad_core::io::varmap::{write_varmap, RawMap};
use varad_core::metrics::{evaluate_category, metrics_csv_rows, CategoryMetrics, EvalImage, METRICS_CSV_HEADER};
use varad_core::pipeline::{score_image, AnomalyMap, Model, ModelSpec, ScoringInput};
use varad_core::sequencer::TokenGrid;
use varad_core::tokenizer::TokenizerMode;
use varad_core::trainer::{
    checkpoint_spec, model_from_ckpt, resume_from_checkpoint, to_checkpoint, train, TrainState, LOSS_CSV_HEADER,
};

use crate::config::{differing_fields, RunConfig};
use crate::dataset::{load_item, load_mask, resolve_mode, test_items, train_items, Item, Loaded, TestItem};
use crate::error::usage;
use crate::synth::{write_dataset, SynthConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.varad";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";

fn run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.run.out.join(&cfg.run.category);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn spec_mismatch(stored: &ModelSpec, wanted: &ModelSpec) -> Result<()> {
    let fields = differing_fields(&json!(stored), &json!(wanted));
    if !fields.is_empty() {
        bail!(
            "checkpoint config differs from the run config in: {}",
            fields.join(", ")
        );
    }
    Ok(())
}

fn tokenize_all(model: &Model<f64>, items: &[Item]) -> Result<Vec<Vec<TokenGrid<f64>>>> {
    let mode = model.spec.tokenizer.mode;
    items
        .par_iter()
        .map(|item| {
            let loaded = load_item(item, mode, &model.spec.tokenizer)?;
            let (grids, _) = match &loaded {
                Loaded::Image(img) => model.tokens_for(ScoringInput::Image(img)),
                Loaded::Tokens(file) => model.tokens_for(ScoringInput::Tokens(file)),
            }
            .with_context(|| format!("tokenizing {}", item.display()))?;
            Ok(grids)
        })
        .collect()
}

/// Grid shapes of imported token files, which must agree across the set.
fn imported_shapes(cfg: &RunConfig, items: &[Item]) -> Result<Vec<(usize, usize)>> {
    let first = items.first().context("no training items")?;
    match load_item(first, TokenizerMode::Imported, &cfg.tokenizer)? {
        Loaded::Tokens(file) => Ok(file.grid_shapes()),
        Loaded::Image(_) => unreachable!("imported mode loads token files"),
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub epochs_done: usize,
    /// Mean step loss of each epoch run by this invocation.
    pub epoch_losses: Vec<(usize, f64)>,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let items = train_items(&cfg.run.dataset, &cfg.run.category)?;
    let mut tokenizer = cfg.tokenizer.clone();
    tokenizer.mode = resolve_mode(cfg.run.tokens, &items);
    let grid_shapes = match tokenizer.mode {
        TokenizerMode::Builtin => tokenizer.grid_shapes(),
        TokenizerMode::Imported => imported_shapes(cfg, &items)?,
    };
    let spec = ModelSpec {
        tokenizer,
        model: cfg.model.clone(),
        prediction_step: cfg.train.m,
        grid_shapes,
    };

    let dir = run_dir(cfg)?;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let loss_path = dir.join(LOSS_FILE);
    let (state, mut log) = match &cfg.run.checkpoint {
        Some(path) => {
            let ckpt = read_checkpoint(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
            spec_mismatch(&checkpoint_spec(&ckpt)?, &spec)?;
            let state: TrainState<f64> = resume_from_checkpoint(&ckpt, Some(cfg.train.clone()))?;
            let fresh = !loss_path.is_file();
            let mut log = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&loss_path)
                .with_context(|| format!("opening {}", loss_path.display()))?;
            if fresh {
                writeln!(log, "{LOSS_CSV_HEADER}")?;
            }
            (state, log)
        }
        None => {
            let model =
                Model::<f64>::new(spec, cfg.train.seed).map_err(|e| usage(format!("invalid model config: {e}")))?;
            let mut log = File::create(&loss_path).with_context(|| format!("creating {}", loss_path.display()))?;
            writeln!(log, "{LOSS_CSV_HEADER}")?;
            (TrainState::new(model, cfg.train.clone()), log)
        }
    };
    let data = tokenize_all(&state.model, &items)?;
    log::info!("training on {} images from epoch {}", data.len(), state.epochs_done + 1);

    let done = train(state, &data, |s| {
        for r in s.log.iter().filter(|r| r.epoch == s.epochs_done) {
            writeln!(log, "{}", r.csv_row()).map_err(|e| varad_core::Error::Io {
                path: loss_path.clone(),
                source: e,
            })?;
        }
        write_checkpoint(&ckpt_path, &to_checkpoint(s))?;
        if let Some((epoch, loss)) = s.epoch_losses().last() {
            println!("epoch {epoch}: loss {loss:.6}");
        }
        Ok(())
    })?;
    log.flush()?;
    Ok(TrainSummary {
        checkpoint: ckpt_path,
        loss_log: loss_path,
        epochs_done: done.epochs_done,
        epoch_losses: done.epoch_losses(),
    })
}

fn load_model(cfg: &RunConfig) -> Result<Model<f32>> {
    let path = cfg
        .run
        .checkpoint
        .as_ref()
        .ok_or_else(|| usage("--checkpoint is required"))?;
    let ckpt = read_checkpoint(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    Ok(model_from_ckpt(&ckpt)?)
}

/// Compares the tokenizer and model sections of an explicit config with the
/// checkpoint's.
fn check_config(model: &Model<f32>, cfg: &RunConfig) -> Result<()> {
    let mut tokenizer = cfg.tokenizer.clone();
    tokenizer.mode = model.spec.tokenizer.mode;
    let stored = json!({"tokenizer": model.spec.tokenizer, "model": model.spec.model, "m": model.spec.prediction_step});
    let given = json!({"tokenizer": tokenizer, "model": cfg.model, "m": cfg.train.m});
    let fields = differing_fields(&stored, &given);
    if !fields.is_empty() {
        bail!("config does not match the checkpoint in: {}", fields.join(", "));
    }
    Ok(())
}

fn score_item(model: &Model<f32>, item: &Item) -> Result<AnomalyMap<f32>> {
    let loaded = load_item(item, model.spec.tokenizer.mode, &model.spec.tokenizer)?;
    let map = match &loaded {
        Loaded::Image(img) => score_image(model, ScoringInput::Image(img)),
        Loaded::Tokens(file) => score_image(model, ScoringInput::Tokens(file)),
    };
    Ok(map?)
}

fn heatmap(map: &AnomalyMap<f32>) -> image::GrayImage {
    let max = map.image_score().max(f32::MIN_POSITIVE);
    image::GrayImage::from_fn(map.width as u32, map.height as u32, |x, y| {
        let v = map.get(y as usize, x as usize) / max;
        image::Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

#[derive(Clone, Debug, Default)]
pub struct ScoreSummary {
    /// Input and its image-level score.
    pub scored: Vec<(PathBuf, f32)>,
    pub failed: Vec<(PathBuf, String)>,
}

/// Scores every input; a failing input is reported and skipped.
pub fn cmd_score(cfg: &RunConfig, explicit_config: bool, inputs: &[PathBuf]) -> Result<ScoreSummary> {
    let mut summary = ScoreSummary::default();
    if inputs.is_empty() {
        return Ok(summary);
    }
    let model = load_model(cfg)?;
    if explicit_config {
        check_config(&model, cfg)?;
    }
    fs::create_dir_all(&cfg.run.out).with_context(|| format!("creating {}", cfg.run.out.display()))?;
    for path in inputs {
        let item = crate::dataset::item_for_path(path);
        let result = score_item(&model, &item).and_then(|map| {
            write_varmap(
                cfg.run.out.join(format!("{}.varmap", item.stem)),
                &RawMap {
                    height: map.height,
                    width: map.width,
                    scores: map.scores.clone(),
                },
            )?;
            let png = cfg.run.out.join(format!("{}_map.png", item.stem));
            heatmap(&map)
                .save(&png)
                .with_context(|| format!("writing {}", png.display()))?;
            Ok(map.image_score())
        });
        match result {
            Ok(score) => {
                println!("{}\t{score:.6}", path.display());
                summary.scored.push((path.clone(), score));
            }
            Err(e) => {
                eprintln!("error: {}: {e:#}", path.display());
                summary.failed.push((path.clone(), format!("{e:#}")));
            }
        }
    }
    Ok(summary)
}

/// Scores test items with `score` and evaluates them against their masks.
pub fn evaluate_items<F>(items: &[TestItem], score: F) -> Result<CategoryMetrics>
where
    F: Fn(&TestItem) -> Result<(Vec<f64>, (usize, usize))> + Sync,
{
    let images: Vec<EvalImage> = items
        .par_iter()
        .map(|t| {
            let (scores, shape) = score(t).with_context(|| format!("scoring {}", t.item.display()))?;
            let mask = match &t.mask {
                Some(path) => load_mask(path, shape)?,
                None => vec![false; shape.0 * shape.1],
            };
            Ok(EvalImage {
                scores,
                mask,
                anomalous: t.anomalous(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(evaluate_category(&images)?)
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub metrics: CategoryMetrics,
    pub csv: PathBuf,
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let model = load_model(cfg)?;
    let items = test_items(&cfg.run.dataset, &cfg.run.category)?;
    if items.is_empty() {
        bail!("no test images for category {}", cfg.run.category);
    }
    let metrics = evaluate_items(&items, |t| {
        let map = score_item(&model, &t.item)?;
        Ok((map.scores.iter().map(|&v| v as f64).collect(), (map.height, map.width)))
    })?;
    let dir = run_dir(cfg)?;
    let csv = dir.join(METRICS_FILE);
    let body = format!(
        "{METRICS_CSV_HEADER}\n{}",
        metrics_csv_rows(&cfg.run.category, &metrics)
    );
    fs::write(&csv, &body).with_context(|| format!("writing {}", csv.display()))?;
    print!("{body}");
    Ok(EvalSummary { metrics, csv })
}

pub fn cmd_synth(cfg: &RunConfig, n_train: usize, n_test: usize, size: usize) -> Result<usize> {
    if n_test == 0 {
        return Err(usage("--n-test must be at least 1"));
    }
    let synth = SynthConfig {
        seed: cfg.train.seed,
        category: cfg.run.category.clone(),
        n_train,
        n_test,
        size,
    };
    let written = write_dataset(&synth, &cfg.run.dataset)?;
    println!(
        "wrote {written} images to {}",
        Path::new(&cfg.run.dataset).join(&cfg.run.category).display()
    );
    Ok(written)
}
