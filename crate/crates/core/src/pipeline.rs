//! End-to-end scoring and the training objective.
//!
//! Per hierarchy: adapt the frozen tokens, unfold them in four directions,
//! predict every sequence with its offset `M`, fold the predictions back and
//! average them, then take the per-cell squared error against the adapted
//! tokens. Score maps are bilinearly upsampled to the source resolution and
//! summed over hierarchies.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoregressor::{
    predictor_backward, predictor_forward, predictor_infer, BlockConfig, PredictorCache, PredictorConfig,
    PredictorParams,
};
use crate::error::{Error, Result};
use crate::io::checkpoint::{Checkpoint, NamedTensor};
use crate::params::{prefixed, zeros_like, Parameters};
use crate::rng::{stream, Stream};
use crate::sequencer::{gather, mds_inverse, offset_for_shape, ScanDirection, TokenGrid};
use crate::tensor::{Matrix, Real};
use crate::tokenizer::{
    adapt_backward, AdapterParams, BuiltinTokenizer, Image, TokenFile, TokenizerConfig, TokenizerMode,
};

/// How a prediction step that does not fit a small grid is handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetPolicy {
    /// Reduce `m` to the largest value that leaves context (`lines - 1`).
    #[default]
    Clamp,
    /// Reject the grid.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub expand: usize,
    pub d_conv: usize,
    pub state_size: usize,
    /// One predictor for all hierarchies instead of one each.
    pub share_predictor: bool,
    pub offset_policy: OffsetPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            expand: 2,
            d_conv: 4,
            state_size: 16,
            share_predictor: false,
            offset_policy: OffsetPolicy::Clamp,
        }
    }
}

/// Everything needed to rebuild a model's shapes; echoed into checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub tokenizer: TokenizerConfig,
    pub model: ModelConfig,
    /// Prediction step `m`.
    pub prediction_step: usize,
    /// `(Hh, Wh)` per hierarchy.
    pub grid_shapes: Vec<(usize, usize)>,
}

impl ModelSpec {
    /// Spec for the built-in tokenizer, grid shapes derived from the image size.
    pub fn builtin(tokenizer: TokenizerConfig, model: ModelConfig, prediction_step: usize) -> Self {
        let grid_shapes = tokenizer.grid_shapes();
        Self {
            tokenizer,
            model,
            prediction_step,
            grid_shapes,
        }
    }

    pub fn hierarchies(&self) -> usize {
        self.grid_shapes.len()
    }

    pub fn channels(&self) -> usize {
        self.tokenizer.channels
    }

    pub fn predictor_config(&self, max_offset: usize) -> PredictorConfig {
        PredictorConfig {
            block: BlockConfig {
                d_model: self.channels(),
                expand: self.model.expand,
                d_conv: self.model.d_conv,
                state_size: self.model.state_size,
            },
            n_layers: self.model.n_layers,
            max_offset,
        }
    }

    /// `M` for every direction of a `(Hh, Wh)` grid under this spec.
    pub fn offsets(&self, height: usize, width: usize) -> Result<[usize; 4]> {
        let mut out = [0; 4];
        for (slot, direction) in out.iter_mut().zip(ScanDirection::ALL) {
            let lines = if direction.is_row_major() { height } else { width };
            let m = match self.model.offset_policy {
                OffsetPolicy::Strict => self.prediction_step,
                OffsetPolicy::Clamp => self.prediction_step.min(lines.saturating_sub(1)),
            };
            *slot = offset_for_shape(height, width, direction, m).map_err(|e| match e {
                Error::InvalidArgument(_) => Error::InvalidArgument(format!(
                    "a {height}×{width} grid leaves no context for direction k={}",
                    direction.k()
                )),
                other => other,
            })?;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        if self.prediction_step == 0 {
            return Err(Error::InvalidArgument("prediction step m must be >= 1".into()));
        }
        if self.grid_shapes.len() != self.tokenizer.hierarchies.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} grid shapes for {} hierarchies",
                self.grid_shapes.len(),
                self.tokenizer.hierarchies.len()
            )));
        }
        let m = &self.model;
        if m.n_layers == 0 || m.expand == 0 || m.d_conv == 0 || m.state_size == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        for &(h, w) in &self.grid_shapes {
            self.offsets(h, w)?;
        }
        Ok(())
    }
}

/// The trainable parameters: one adapter per hierarchy and one predictor per
/// hierarchy (or a single shared one).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub adapters: Vec<AdapterParams<T>>,
    pub predictors: Vec<PredictorParams<T>>,
}

impl<T: Real> Parameters<T> for ModelParams<T> {
    fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = Vec::new();
        for (h, a) in self.adapters.iter().enumerate() {
            out.extend(prefixed(&format!("adapter.{h}"), a.tensors()));
        }
        for (h, p) in self.predictors.iter().enumerate() {
            out.extend(prefixed(&format!("predictor.{h}"), p.tensors()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out = Vec::new();
        for (h, a) in self.adapters.iter_mut().enumerate() {
            out.extend(prefixed(&format!("adapter.{h}"), a.tensors_mut()));
        }
        for (h, p) in self.predictors.iter_mut().enumerate() {
            out.extend(prefixed(&format!("predictor.{h}"), p.tensors_mut()));
        }
        out
    }
}

impl<T: Real> ModelParams<T> {
    pub fn predictor(&self, hierarchy: usize) -> &PredictorParams<T> {
        &self.predictors[hierarchy.min(self.predictors.len() - 1)]
    }

    fn predictor_index(&self, hierarchy: usize) -> usize {
        hierarchy.min(self.predictors.len() - 1)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            adapters: self
                .adapters
                .iter()
                .map(|a| AdapterParams {
                    weight: a.weight.cast(),
                    bias: a.bias.cast(),
                })
                .collect(),
            predictors: self.predictors.iter().map(cast_predictor).collect(),
        }
    }
}

fn cast_predictor<T: Real, U: Real>(p: &PredictorParams<T>) -> PredictorParams<U> {
    PredictorParams {
        blocks: p
            .blocks
            .iter()
            .map(|b| crate::autoregressor::MambaBlockParams {
                norm: b.norm.cast(),
                in_proj: b.in_proj.cast(),
                conv_weight: b.conv_weight.cast(),
                conv_bias: b.conv_bias.cast(),
                ssm: b.ssm.cast(),
                out_proj: b.out_proj.cast(),
            })
            .collect(),
        norm_f: p.norm_f.cast(),
        head: p.head.cast(),
        bos: p.bos.cast(),
        eos: p.eos.cast(),
    }
}

/// Scoring input: a raw image for the built-in tokenizer, or a token file.
#[derive(Clone, Copy, Debug)]
pub enum ScoringInput<'a> {
    Image(&'a Image),
    Tokens(&'a TokenFile),
}

/// Frozen tokenizer plus trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub spec: ModelSpec,
    pub params: ModelParams<T>,
    /// Present in built-in mode; never trained.
    pub tokenizer: Option<BuiltinTokenizer>,
}

impl<T: Real> Model<T> {
    /// Fresh model: identity adapters, randomly initialized predictors.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut max_offsets = Vec::with_capacity(spec.hierarchies());
        for &(h, w) in &spec.grid_shapes {
            max_offsets.push(spec.offsets(h, w)?.into_iter().max().unwrap_or(1));
        }
        let mut rng = stream(seed, Stream::Init, 0);
        let n_predictors = if spec.model.share_predictor {
            1
        } else {
            spec.hierarchies()
        };
        let predictors = (0..n_predictors)
            .map(|i| {
                let max_offset = if spec.model.share_predictor {
                    max_offsets.iter().copied().max().unwrap_or(1)
                } else {
                    max_offsets[i]
                };
                PredictorParams::init(spec.predictor_config(max_offset), &mut rng)
            })
            .collect();
        let params = ModelParams {
            adapters: (0..spec.hierarchies())
                .map(|_| AdapterParams::zeros(spec.channels()))
                .collect(),
            predictors,
        };
        let tokenizer = match spec.tokenizer.mode {
            TokenizerMode::Builtin => Some(BuiltinTokenizer::new(&spec.tokenizer)?),
            TokenizerMode::Imported => None,
        };
        Ok(Self {
            spec,
            params,
            tokenizer,
        })
    }

    /// Replaces every adapter with small random weights (tests and ablations).
    pub fn randomize_adapters<R: Rng>(&mut self, bound: f64, rng: &mut R) {
        for a in &mut self.params.adapters {
            *a = AdapterParams::random(a.weight.cols(), bound, rng);
        }
    }

    /// Token grids and source size `(H, W)` for an input.
    pub fn tokens_for(&self, input: ScoringInput<'_>) -> Result<(Vec<TokenGrid<T>>, (usize, usize))> {
        match input {
            ScoringInput::Image(image) => {
                let tok = self.tokenizer.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("model was trained on imported tokens; pass a token file".into())
                })?;
                Ok((tok.tokenize(image)?, (image.height, image.width)))
            }
            ScoringInput::Tokens(file) => {
                file.check(self.spec.hierarchies(), self.spec.channels())?;
                let grids = file.grids.iter().map(|g| g.cast()).collect();
                Ok((grids, (file.source_height as usize, file.source_width as usize)))
            }
        }
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            params: self.params.cast(),
            tokenizer: self.tokenizer.clone(),
        }
    }

    fn check_grids(&self, grids: &[TokenGrid<T>]) -> Result<()> {
        if grids.len() != self.spec.hierarchies() {
            return Err(Error::ShapeMismatch(format!(
                "{} token grids for a model with {} hierarchies",
                grids.len(),
                self.spec.hierarchies()
            )));
        }
        for (h, g) in grids.iter().enumerate() {
            if g.channels() != self.spec.channels() {
                return Err(Error::ShapeMismatch(format!(
                    "hierarchy {h} has {} channels, model expects {}",
                    g.channels(),
                    self.spec.channels()
                )));
            }
            if let Some(step) = g.tokens().first_non_finite_row() {
                return Err(Error::NonFinite {
                    stage: "input tokens",
                    step,
                });
            }
        }
        Ok(())
    }
}

/// Predictions of one hierarchy.
#[derive(Clone, Debug)]
pub struct HierarchyPrediction<T> {
    /// Adapted tokens `F̂` `[cells × C]`.
    pub adapted: Matrix<T>,
    /// Per direction, predicted tokens `v̄_1..v̄_L` in scan order.
    pub directions: [Matrix<T>; 4],
    /// Averaged prediction `F̄` `[cells × C]`.
    pub mean: Matrix<T>,
    pub offsets: [usize; 4],
    /// `A^h` as an `[Hh × Wh]` matrix.
    pub error_map: Matrix<T>,
    /// Sum over directions and EOS rows of the squared EOS error.
    pub eos_error: T,
}

struct DirectionPass<T> {
    out: Matrix<T>,
    cache: Option<PredictorCache<T>>,
}

fn hierarchy_forward<T: Real>(
    model: &Model<T>,
    h: usize,
    grid: &TokenGrid<T>,
    keep: bool,
) -> Result<(HierarchyPrediction<T>, Vec<DirectionPass<T>>)> {
    let (gh, gw) = (grid.height(), grid.width());
    let offsets = model.spec.offsets(gh, gw)?;
    let adapted = model.params.adapters[h].apply(grid.tokens());
    let predictor = model.params.predictor(h);
    let passes: Vec<DirectionPass<T>> = ScanDirection::ALL
        .par_iter()
        .zip(offsets.par_iter())
        .map(|(&direction, &offset)| {
            let seq = gather(&adapted, &direction.order(gh, gw));
            if keep {
                let (out, cache) = predictor_forward(predictor, &seq, offset)?;
                Ok(DirectionPass {
                    out,
                    cache: Some(cache),
                })
            } else {
                Ok(DirectionPass {
                    out: predictor_infer(predictor, &seq, offset)?,
                    cache: None,
                })
            }
        })
        .collect::<Result<_>>()?;
    let cells = gh * gw;
    let directions: [Matrix<T>; 4] = std::array::from_fn(|k| passes[k].out.slice_rows(0, cells));
    let mean = mds_inverse([&directions[0], &directions[1], &directions[2], &directions[3]], gh, gw)?.into_tokens();
    let error_map = Matrix::from_fn(gh, gw, |i, j| {
        let cell = i * gw + j;
        mean.row(cell)
            .iter()
            .zip(adapted.row(cell))
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    });
    let mut eos_error = T::zero();
    for (pass, &offset) in passes.iter().zip(&offsets) {
        for r in 0..offset {
            for (&a, &b) in pass.out.row(cells + r).iter().zip(predictor.eos.row(r)) {
                eos_error += (a - b) * (a - b);
            }
        }
    }
    Ok((
        HierarchyPrediction {
            adapted,
            directions,
            mean,
            offsets,
            error_map,
            eos_error,
        },
        passes,
    ))
}

/// Predictions and error map of hierarchy `h`.
pub fn predict_hierarchy<T: Real>(model: &Model<T>, h: usize, grid: &TokenGrid<T>) -> Result<HierarchyPrediction<T>> {
    hierarchy_forward(model, h, grid, false).map(|(p, _)| p)
}

/// Per-pixel anomaly scores at source resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyMap<T> {
    pub height: usize,
    pub width: usize,
    /// Row-major `[H × W]`.
    pub scores: Vec<T>,
    /// `A^h` at token resolution.
    pub per_hierarchy: Vec<Matrix<T>>,
}

impl<T: Real> AnomalyMap<T> {
    /// Image-level anomaly score: the maximum of the map.
    pub fn image_score(&self) -> T {
        self.scores.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.scores[i * self.width + j]
    }
}

/// Bilinear resize with half-pixel centers: source coordinate
/// `(dst + 0.5)·(in/out) - 0.5`, clamped to the edge cells.
pub fn upsample_bilinear<T: Real>(src: &Matrix<T>, out_h: usize, out_w: usize) -> Vec<T> {
    let (in_h, in_w) = src.shape();
    let axis = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, T) {
        let scale = n_in as f64 / n_out as f64;
        let s = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        let f = if i1 == i0 { 0.0 } else { s - i0 as f64 };
        (i0, i1, T::lit(f))
    };
    let cols: Vec<_> = (0..out_w).map(|x| axis(x, in_w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, in_h, out_h);
        for &(x0, x1, fx) in &cols {
            let top = src.get(y0, x0) + fx * (src.get(y0, x1) - src.get(y0, x0));
            let bottom = src.get(y1, x0) + fx * (src.get(y1, x1) - src.get(y1, x0));
            out.push(top + fy * (bottom - top));
        }
    }
    out
}

/// Anomaly map for precomputed token grids.
pub fn score_grids<T: Real>(model: &Model<T>, grids: &[TokenGrid<T>], source: (usize, usize)) -> Result<AnomalyMap<T>> {
    model.check_grids(grids)?;
    let (height, width) = source;
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("source image size must be positive".into()));
    }
    let per_hierarchy: Vec<Matrix<T>> = grids
        .iter()
        .enumerate()
        .map(|(h, g)| predict_hierarchy(model, h, g).map(|p| p.error_map))
        .collect::<Result<_>>()?;
    let mut scores = vec![T::zero(); height * width];
    for map in &per_hierarchy {
        for (s, v) in scores.iter_mut().zip(upsample_bilinear(map, height, width)) {
            *s += v;
        }
    }
    Ok(AnomalyMap {
        height,
        width,
        scores,
        per_hierarchy,
    })
}

pub fn score_image<T: Real>(model: &Model<T>, input: ScoringInput<'_>) -> Result<AnomalyMap<T>> {
    let (grids, source) = model.tokens_for(input)?;
    score_grids(model, &grids, source)
}

/// Normalizer of one hierarchy's loss term: cells plus a quarter per EOS row
/// per direction, matching the 1/4 weight each direction has in `F̄`.
fn loss_denominator<T: Real>(cells: usize, offsets: &[usize; 4]) -> T {
    T::lit(cells as f64) + T::lit(0.25) * T::lit(offsets.iter().sum::<usize>() as f64)
}

/// Mean over hierarchies of `(Σ_cells A^h + ¼·EOS error) / (L^h + ¼·Σ_k M_k)`.
pub fn loss<T: Real>(model: &Model<T>, grids: &[TokenGrid<T>]) -> Result<T> {
    model.check_grids(grids)?;
    let mut total = T::zero();
    for (h, g) in grids.iter().enumerate() {
        let p = predict_hierarchy(model, h, g)?;
        let sum: T = p.error_map.as_slice().iter().copied().sum();
        total += (sum + T::lit(0.25) * p.eos_error) / loss_denominator::<T>(g.cells(), &p.offsets);
    }
    Ok(total / T::lit(grids.len() as f64))
}

/// Loss and its exact gradient with respect to every trainable parameter.
pub fn loss_and_grad<T: Real>(model: &Model<T>, grids: &[TokenGrid<T>]) -> Result<(T, ModelParams<T>)> {
    model.check_grids(grids)?;
    let n_h = T::lit(grids.len() as f64);
    let quarter = T::lit(0.25);
    let two = T::lit(2.0);
    let mut grads = zeros_like(&model.params);
    let mut total = T::zero();

    for (h, grid) in grids.iter().enumerate() {
        let (pred, passes) = hierarchy_forward(model, h, grid, true)?;
        let (gh, gw) = (grid.height(), grid.width());
        let cells = gh * gw;
        let denom = loss_denominator::<T>(cells, &pred.offsets);
        let sum: T = pred.error_map.as_slice().iter().copied().sum();
        total += (sum + quarter * pred.eos_error) / denom;
        let w = T::one() / (n_h * denom);

        let mut d_adapted = Matrix::zeros(cells, grid.channels());
        let mut d_mean = Matrix::zeros(cells, grid.channels());
        for ((dm, da), (&m, &a)) in d_mean
            .as_mut_slice()
            .iter_mut()
            .zip(d_adapted.as_mut_slice().iter_mut())
            .zip(pred.mean.as_slice().iter().zip(pred.adapted.as_slice()))
        {
            let g = two * w * (m - a);
            *dm = g;
            *da = -g;
        }

        let p_idx = model.params.predictor_index(h);
        let predictor = &model.params.predictors[p_idx];
        let results: Vec<(Matrix<T>, PredictorParams<T>, Matrix<T>)> = ScanDirection::ALL
            .par_iter()
            .zip(passes.par_iter())
            .zip(pred.offsets.par_iter())
            .map(|((&direction, pass), &offset)| {
                let order = direction.order(gh, gw);
                let mut d_out = Matrix::zeros(cells + offset, grid.channels());
                for (l, &cell) in order.iter().enumerate() {
                    for (o, &g) in d_out.row_mut(l).iter_mut().zip(d_mean.row(cell)) {
                        *o = quarter * g;
                    }
                }
                let mut d_eos = Matrix::zeros(predictor.eos.rows(), grid.channels());
                for r in 0..offset {
                    for c in 0..grid.channels() {
                        let g = quarter * two * w * (pass.out.get(cells + r, c) - predictor.eos.get(r, c));
                        d_out.set(cells + r, c, g);
                        d_eos.set(r, c, -g);
                    }
                }
                let mut g = zeros_like(predictor);
                let cache = pass.cache.as_ref().expect("forward kept caches");
                let d_seq = predictor_backward(predictor, cache, &d_out, &mut g)?;
                Ok((d_seq, g, d_eos))
            })
            .collect::<Result<_>>()?;

        for ((d_seq, g, d_eos), direction) in results.into_iter().zip(ScanDirection::ALL) {
            for (l, cell) in direction.order(gh, gw).into_iter().enumerate() {
                for (a, &d) in d_adapted.row_mut(cell).iter_mut().zip(d_seq.row(l)) {
                    *a += d;
                }
            }
            let target = &mut grads.predictors[p_idx];
            target.accumulate(&g);
            target.eos.add_assign(&d_eos);
        }
        adapt_backward(grid.tokens(), &d_adapted, &mut grads.adapters[h]);
    }
    Ok((total / n_h, grads))
}

const TOKENIZER_PREFIX: &str = "tokenizer.";

/// Model tensors (as f32) plus the frozen tokenizer projections.
pub fn model_tensors<T: Real>(model: &Model<T>) -> Vec<NamedTensor> {
    let mut out: Vec<NamedTensor> = model
        .params
        .tensors()
        .into_iter()
        .map(|(name, m)| NamedTensor {
            name,
            shape: vec![m.rows(), m.cols()],
            data: m.as_slice().iter().map(|v| v.as_f32()).collect(),
        })
        .collect();
    if let Some(tok) = &model.tokenizer {
        for (h, p) in tok.projections().iter().enumerate() {
            out.push(NamedTensor {
                name: format!("{TOKENIZER_PREFIX}{h}.projection"),
                shape: vec![p.rows(), p.cols()],
                data: p.as_slice().to_vec(),
            });
        }
    }
    out
}

/// Rejects a spec whose weight matrices alone hold more values than the
/// tensors in `ckpt`, before anything is allocated from it.
fn check_spec_fits(spec: &ModelSpec, ckpt: &Checkpoint) -> Result<()> {
    spec.validate()?;
    let mul = |a: usize, b: usize| a.saturating_mul(b);
    let c = spec.channels();
    let (d, p) = (mul(spec.model.expand, c), spec.model.state_size);
    let block = [
        mul(3, mul(c, d)),
        mul(d, spec.model.d_conv),
        mul(d, d),
        mul(3, mul(d, p)),
    ]
    .into_iter()
    .fold(0usize, usize::saturating_add);
    let mut offsets = Vec::with_capacity(spec.grid_shapes.len());
    for &(h, w) in &spec.grid_shapes {
        offsets.push(spec.offsets(h, w)?.into_iter().max().unwrap_or(1));
    }
    let tables = if spec.model.share_predictor {
        offsets.iter().copied().max().unwrap_or(1)
    } else {
        offsets.iter().fold(0usize, |a, &b| a.saturating_add(b))
    };
    let n_predictors = if spec.model.share_predictor {
        1
    } else {
        spec.hierarchies()
    };
    let mut needed = mul(mul(n_predictors, spec.model.n_layers), block).saturating_add(mul(mul(2, tables), c));
    if spec.tokenizer.mode == TokenizerMode::Builtin {
        for h in &spec.tokenizer.hierarchies {
            needed = needed.saturating_add(mul(mul(3, mul(h.downsample, h.downsample)), c));
        }
    }
    let stored = ckpt.tensors.iter().fold(0usize, |a, t| a.saturating_add(t.data.len()));
    if needed > stored {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint spec needs at least {needed} values but the file holds {stored}"
        )));
    }
    Ok(())
}

/// Rebuilds a model from a spec and the tensors of a checkpoint.
pub fn model_from_checkpoint<T: Real>(spec: ModelSpec, ckpt: &Checkpoint) -> Result<Model<T>> {
    check_spec_fits(&spec, ckpt)?;
    let mut model = Model::<T>::new(spec, 0)?;
    for (name, m) in model.params.tensors_mut() {
        let t = ckpt
            .get(&name)
            .ok_or_else(|| Error::ShapeMismatch(format!("checkpoint lacks tensor {name}")))?;
        if t.shape != [m.rows(), m.cols()] {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name} has shape {:?}, model expects {:?}",
                t.shape,
                [m.rows(), m.cols()]
            )));
        }
        for (dst, &src) in m.as_mut_slice().iter_mut().zip(&t.data) {
            *dst = T::of_f32(src);
        }
    }
    if let Some(tok) = &model.tokenizer {
        let mut projections = Vec::new();
        for (h, p) in tok.projections().iter().enumerate() {
            let name = format!("{TOKENIZER_PREFIX}{h}.projection");
            match ckpt.get(&name) {
                Some(t) if t.shape == [p.rows(), p.cols()] => {
                    projections.push(Matrix::from_vec(p.rows(), p.cols(), t.data.clone()))
                }
                Some(_) => return Err(Error::ShapeMismatch(format!("tensor {name} has the wrong shape"))),
                None => return Err(Error::ShapeMismatch(format!("checkpoint lacks tensor {name}"))),
            }
        }
        model.tokenizer = Some(BuiltinTokenizer::from_projections(
            tok.downsample().to_vec(),
            projections,
        )?);
    }
    Ok(model)
}
