//! Procedural texture categories with painted defects, in the MVTec layout.
//!
//! A category is a sum of 2–4 oriented sinusoids whose orientations,
//! periods, amplitudes and channel tints are fixed by `(seed, category)`.
//! Each image draws its own phases and pixel noise. Anomalies are squares or
//! ellipses whose intensity is shifted by at least 0.3 of the dynamic range;
//! the mask is written from the same inside-test that paints the defect.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use varad_core::rng::{stream, Stream};

/// Folder name of the only synthetic defect type.
pub const DEFECT: &str = "patch";

const MAX_AMPLITUDE: f64 = 0.15;
const NOISE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub category: String,
    pub n_train: usize,
    /// Good and anomalous test images each.
    pub n_test: usize,
    pub size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            category: "synth0".into(),
            n_train: 32,
            n_test: 16,
            size: 128,
        }
    }
}

#[derive(Clone, Debug)]
struct Wave {
    amplitude: f64,
    /// Spatial angular frequency along rows and columns.
    k: (f64, f64),
    tint: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Square { top: usize, left: usize, side: usize },
    Ellipse { ci: f64, cj: f64, ri: f64, rj: f64 },
}

impl Shape {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        match *self {
            Shape::Square { top, left, side } => (top..top + side).contains(&i) && (left..left + side).contains(&j),
            Shape::Ellipse { ci, cj, ri, rj } => {
                let (di, dj) = ((i as f64 - ci) / ri, (j as f64 - cj) / rj);
                di * di + dj * dj <= 1.0
            }
        }
    }
}

/// RGB image in `[0, 1]`, channel-major, plus its defect mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthImage {
    pub size: usize,
    pub rgb: Vec<f32>,
    pub mask: Option<Vec<bool>>,
}

impl SynthImage {
    pub fn defect_area(&self) -> usize {
        self.mask.as_ref().map_or(0, |m| m.iter().filter(|&&v| v).count())
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Clone, Copy)]
enum Split {
    Texture = 0,
    Train = 1,
    TestGood = 2,
    TestDefect = 3,
    Sample = 4,
}

fn rng_for(cfg: &SynthConfig, split: Split, index: usize) -> ChaCha8Rng {
    stream(
        cfg.seed ^ fnv1a(&cfg.category),
        Stream::Synth,
        ((split as u64) << 24) | index as u64,
    )
}

fn texture(cfg: &SynthConfig) -> Vec<Wave> {
    let mut rng = rng_for(cfg, Split::Texture, 0);
    let count = rng.random_range(2..=4);
    let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.5..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights
        .into_iter()
        .map(|w| {
            let angle = rng.random_range(0.0..PI);
            let period = rng.random_range(8.0..32.0);
            let k = 2.0 * PI / period;
            Wave {
                amplitude: MAX_AMPLITUDE * w / total,
                k: (k * angle.sin(), k * angle.cos()),
                tint: [0; 3].map(|_| rng.random_range(0.6..1.0)),
            }
        })
        .collect()
}

fn paint(cfg: &SynthConfig, waves: &[Wave], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = cfg.size;
    let phases: Vec<f64> = waves.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut out = vec![0.0; 3 * n * n];
    for c in 0..3 {
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.5;
                for (w, &phase) in waves.iter().zip(&phases) {
                    v += w.amplitude * w.tint[c] * (w.k.0 * i as f64 + w.k.1 * j as f64 + phase).sin();
                }
                out[(c * n + i) * n + j] = v + rng.random_range(-NOISE..NOISE);
            }
        }
    }
    out
}

fn random_shape(size: usize, rng: &mut ChaCha8Rng) -> Shape {
    if rng.random_bool(0.5) {
        let side = rng.random_range(10..=28);
        Shape::Square {
            top: rng.random_range(0..=size - side),
            left: rng.random_range(0..=size - side),
            side,
        }
    } else {
        let ri = rng.random_range(5.0..14.0);
        let rj = rng.random_range(5.0..14.0);
        Shape::Ellipse {
            ci: rng.random_range(ri..size as f64 - ri),
            cj: rng.random_range(rj..size as f64 - rj),
            ri,
            rj,
        }
    }
}

fn finish(size: usize, values: Vec<f64>, mask: Option<Vec<bool>>) -> SynthImage {
    SynthImage {
        size,
        rgb: values.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect(),
        mask,
    }
}

fn normal(cfg: &SynthConfig, waves: &[Wave], split: Split, index: usize) -> SynthImage {
    let mut rng = rng_for(cfg, split, index);
    finish(cfg.size, paint(cfg, waves, &mut rng), None)
}

fn anomalous(cfg: &SynthConfig, waves: &[Wave], index: usize) -> SynthImage {
    let mut rng = rng_for(cfg, Split::TestDefect, index);
    let mut values = paint(cfg, waves, &mut rng);
    let shape = random_shape(cfg.size, &mut rng);
    // the texture stays within 0.5 ± 0.17, so this shift never clips
    let shift = rng.random_range(0.3..0.33) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let n = cfg.size;
    let mut mask = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if shape.contains(i, j) {
                mask[i * n + j] = true;
                for c in 0..3 {
                    values[(c * n + i) * n + j] += shift;
                }
            }
        }
    }
    finish(n, values, Some(mask))
}

/// One normal image of the category, outside the train/test splits.
pub fn sample_image(cfg: &SynthConfig) -> SynthImage {
    normal(cfg, &texture(cfg), Split::Sample, 0)
}

#[derive(Clone, Debug)]
pub struct SynthSet {
    pub train: Vec<SynthImage>,
    pub test_good: Vec<SynthImage>,
    pub test_defect: Vec<SynthImage>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthSet> {
    ensure!(cfg.n_test >= 1, "synth needs at least one anomalous test image");
    ensure!(cfg.size >= 32, "synth image size must be at least 32");
    let waves = texture(cfg);
    Ok(SynthSet {
        train: (0..cfg.n_train).map(|i| normal(cfg, &waves, Split::Train, i)).collect(),
        test_good: (0..cfg.n_test)
            .map(|i| normal(cfg, &waves, Split::TestGood, i))
            .collect(),
        test_defect: (0..cfg.n_test).map(|i| anomalous(cfg, &waves, i)).collect(),
    })
}

fn to_png(img: &SynthImage) -> image::RgbImage {
    let n = img.size;
    image::RgbImage::from_fn(n as u32, n as u32, |x, y| {
        let at = |c: usize| (img.rgb[(c * n + y as usize) * n + x as usize] * 255.0).round() as u8;
        image::Rgb([at(0), at(1), at(2)])
    })
}

fn mask_png(mask: &[bool], n: usize) -> image::GrayImage {
    image::GrayImage::from_fn(n as u32, n as u32, |x, y| {
        image::Luma([if mask[y as usize * n + x as usize] { 255 } else { 0 }])
    })
}

fn save(img: &image::DynamicImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Writes `root/<category>/{train/good, test/good, test/patch, ground_truth/patch}`
/// and returns the number of images written.
pub fn write_dataset(cfg: &SynthConfig, root: &Path) -> Result<usize> {
    let set = generate(cfg)?;
    let base: PathBuf = root.join(&cfg.category);
    let name = |i: usize| format!("{i:03}.png");
    for (i, img) in set.train.iter().enumerate() {
        save(&to_png(img).into(), &base.join("train/good").join(name(i)))?;
    }
    for (i, img) in set.test_good.iter().enumerate() {
        save(&to_png(img).into(), &base.join("test/good").join(name(i)))?;
    }
    for (i, img) in set.test_defect.iter().enumerate() {
        save(&to_png(img).into(), &base.join("test").join(DEFECT).join(name(i)))?;
        let mask = img.mask.as_ref().expect("defect images carry masks");
        save(
            &mask_png(mask, img.size).into(),
            &base.join("ground_truth").join(DEFECT).join(format!("{i:03}_mask.png")),
        )?;
    }
    Ok(set.train.len() + set.test_good.len() + set.test_defect.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 2,
            n_test: 2,
            size: 64,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test_defect, b.test_defect);
        let other = SynthConfig {
            category: "synth1".into(),
            ..small()
        };
        assert_ne!(generate(&other).unwrap().train, a.train);
    }

    #[test]
    fn defects_shift_intensity_inside_the_mask_only() {
        let set = generate(&small()).unwrap();
        for img in &set.test_defect {
            let mask = img.mask.as_ref().unwrap();
            let area = img.defect_area();
            assert!((5 * 5 * 3..=28 * 28).contains(&area), "{area}");
            let n = img.size;
            for (p, &inside) in mask.iter().enumerate() {
                let v = img.rgb[p] as f64;
                let far = (v - 0.5).abs() >= 0.3 - MAX_AMPLITUDE - NOISE;
                if !inside {
                    assert!((v - 0.5).abs() <= MAX_AMPLITUDE + NOISE + 1e-6, "pixel {p} of {n}×{n}");
                } else {
                    assert!(far);
                }
            }
        }
    }

    #[test]
    fn zero_anomalous_images_is_rejected() {
        let cfg = SynthConfig { n_test: 0, ..small() };
        assert!(generate(&cfg).is_err());
    }
}
