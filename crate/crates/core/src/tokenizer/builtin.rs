use rand::Rng;
use rand_distr::StandardNormal;

use super::TokenizerConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::sequencer::TokenGrid;
use crate::tensor::{Matrix, Real};

/// Three-channel image, channel-major `[3 × H × W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a 3×{height}×{width} image",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; 3 * height * width],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        self.data[(c * self.height + i) * self.width + j]
    }

    /// Maps `[0, 1]` intensities to `(x - mean) / std` per channel.
    pub fn normalize(&mut self, mean: &[f32; 3], std: &[f32; 3]) {
        let plane = self.height * self.width;
        for c in 0..3 {
            for v in &mut self.data[c * plane..(c + 1) * plane] {
                *v = (*v - mean[c]) / std[c];
            }
        }
    }
}

/// Frozen patch tokenizer: every hierarchy flattens non-overlapping
/// `N × N × 3` patches and projects them with a seeded random matrix whose
/// rows are orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltinTokenizer {
    downsample: Vec<usize>,
    /// `[C × 3N²]` per hierarchy.
    projections: Vec<Matrix<f32>>,
}

impl BuiltinTokenizer {
    pub fn new(config: &TokenizerConfig) -> Result<Self> {
        config.validate()?;
        let mut projections = Vec::with_capacity(config.hierarchies.len());
        for (h, spec) in config.hierarchies.iter().enumerate() {
            let patch = 3 * spec.downsample * spec.downsample;
            if config.channels > patch {
                return Err(Error::InvalidArgument(format!(
                    "{} channels cannot be orthonormal in a {patch}-dimensional patch space",
                    config.channels
                )));
            }
            let mut rng = stream(config.seed, Stream::Tokenizer, h as u64);
            projections.push(orthonormal_rows(config.channels, patch, &mut rng));
        }
        Ok(Self {
            downsample: config.hierarchies.iter().map(|s| s.downsample).collect(),
            projections,
        })
    }

    /// Rebuilds a tokenizer from stored projections.
    pub fn from_projections(downsample: Vec<usize>, projections: Vec<Matrix<f32>>) -> Result<Self> {
        if downsample.len() != projections.len() {
            return Err(Error::ShapeMismatch("one projection per hierarchy".into()));
        }
        for (&n, p) in downsample.iter().zip(&projections) {
            if p.cols() != 3 * n * n {
                return Err(Error::ShapeMismatch(format!(
                    "projection for N={n} has {} columns",
                    p.cols()
                )));
            }
        }
        Ok(Self {
            downsample,
            projections,
        })
    }

    pub fn projections(&self) -> &[Matrix<f32>] {
        &self.projections
    }

    pub fn downsample(&self) -> &[usize] {
        &self.downsample
    }

    pub fn tokenize<T: Real>(&self, image: &Image) -> Result<Vec<TokenGrid<T>>> {
        self.downsample
            .iter()
            .zip(&self.projections)
            .enumerate()
            .map(|(h, (&n, proj))| {
                if !image.height.is_multiple_of(n) || !image.width.is_multiple_of(n) {
                    return Err(Error::InvalidArgument(format!(
                        "image {}×{} is not divisible by downsample {n}",
                        image.height, image.width
                    )));
                }
                let (gh, gw) = (image.height / n, image.width / n);
                let mut patch = vec![0f32; 3 * n * n];
                let mut tokens = Matrix::zeros(gh * gw, proj.rows());
                for i in 0..gh {
                    for j in 0..gw {
                        let mut k = 0;
                        for c in 0..3 {
                            for dy in 0..n {
                                let row = (c * image.height + i * n + dy) * image.width + j * n;
                                patch[k..k + n].copy_from_slice(&image.data[row..row + n]);
                                k += n;
                            }
                        }
                        let out = tokens.row_mut(i * gw + j);
                        for (o, v) in out.iter_mut().enumerate() {
                            let w = proj.row(o);
                            let mut acc = 0f32;
                            for (a, b) in w.iter().zip(&patch) {
                                acc += a * b;
                            }
                            *v = T::of_f32(acc);
                        }
                    }
                }
                Ok(TokenGrid::new(tokens, gh, gw)?.with_hierarchy(h, n))
            })
            .collect()
    }
}

/// Gaussian rows orthonormalized by modified Gram-Schmidt in f64.
fn orthonormal_rows<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<f32> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Matrix::from_fn(rows, cols, |r, c| basis[r][c] as f32)
}
