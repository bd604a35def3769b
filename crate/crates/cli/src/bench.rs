//! Scaling benchmark: SSM scan time against sequence length, and end-to-end
//! scoring time and peak memory against image resolution.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Result;
use varad_core::pipeline::{score_image, Model, ModelSpec, ScoringInput};
use varad_core::rng::{stream, Stream};
use varad_core::ssm::{scan, SsmLayerParams};
use varad_core::tokenizer::Image;
use varad_core::Matrix;

use crate::config::RunConfig;
use crate::error::NumericFailure;
use crate::synth::{sample_image, SynthConfig};

pub const SCAN_LENGTHS: [usize; 3] = [4096, 8192, 16384];
pub const RESOLUTIONS: [usize; 3] = [256, 512, 1024];
pub const MAX_SCAN_RATIO: f64 = 2.5;
pub const CSV_HEADER: &str = "kind,size,seconds,ratio,peak_rss_mib";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    /// `scan` or `score`.
    pub kind: &'static str,
    /// Sequence length or image side.
    pub size: usize,
    pub seconds: f64,
    /// Against the previous row of the same kind.
    pub ratio: Option<f64>,
    pub peak_rss_mib: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        let opt = |v: Option<f64>, digits: usize| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.digits$}"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{}",
                r.kind,
                r.size,
                r.seconds,
                opt(r.ratio, 3),
                opt(r.peak_rss_mib, 1)
            );
        }
        out
    }

    pub fn scan_ratios(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.kind == "scan")
            .filter_map(|r| r.ratio)
            .collect()
    }

    pub fn peak_rss_mib(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.peak_rss_mib).reduce(f64::max)
    }
}

/// Peak resident set size of this process (`VmHWM`), Linux only.
pub fn peak_rss_mib() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib / 1024.0)
}

fn min_time(repeats: usize, mut f: impl FnMut()) -> f64 {
    (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn with_ratios(rows: &mut [BenchRow]) {
    for i in 1..rows.len() {
        rows[i].ratio = Some(rows[i].seconds / rows[i - 1].seconds);
    }
}

/// Minimum-of-`repeats` wall time of a cache-free scan at the model's inner
/// width and state size.
pub fn bench_scan(cfg: &RunConfig, lengths: &[usize], repeats: usize) -> Result<Vec<BenchRow>> {
    let d_in = cfg.model.expand * cfg.tokenizer.channels;
    let mut rng = stream(cfg.train.seed, Stream::Aux, 0);
    let layer = SsmLayerParams::<f32>::init(d_in, cfg.model.state_size, &mut rng);
    let longest = lengths.iter().copied().max().unwrap_or(0);
    let x = Matrix::<f32>::uniform(longest, d_in, 1.0, &mut rng);
    let mut rows = Vec::new();
    for &len in lengths {
        let input = x.slice_rows(0, len);
        scan(&layer, &input)?;
        let seconds = min_time(repeats, || {
            std::hint::black_box(scan(&layer, std::hint::black_box(&input)).expect("scan of finite input"));
        });
        rows.push(BenchRow {
            kind: "scan",
            size: len,
            seconds,
            ratio: None,
            peak_rss_mib: None,
        });
    }
    with_ratios(&mut rows);
    Ok(rows)
}

/// Scores one synthetic image per resolution with an untrained model of the
/// configured shape.
pub fn bench_score(cfg: &RunConfig, resolutions: &[usize], repeats: usize) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &res in resolutions {
        let mut tokenizer = cfg.tokenizer.clone();
        tokenizer.image_size = [res, res];
        tokenizer.mode = varad_core::tokenizer::TokenizerMode::Builtin;
        let spec = ModelSpec::builtin(tokenizer.clone(), cfg.model.clone(), cfg.train.m);
        let model = Model::<f32>::new(spec, cfg.train.seed)?;
        let synth = SynthConfig {
            seed: cfg.train.seed,
            size: res,
            ..SynthConfig::default()
        };
        let mut image = Image::new(res, res, sample_image(&synth).rgb)?;
        image.normalize(&tokenizer.mean, &tokenizer.std);
        let mut failure = None;
        let seconds = min_time(repeats, || {
            if let Err(e) = score_image(&model, ScoringInput::Image(&image)) {
                failure = Some(e);
            }
        });
        if let Some(e) = failure {
            return Err(e.into());
        }
        rows.push(BenchRow {
            kind: "score",
            size: res,
            seconds,
            ratio: None,
            peak_rss_mib: peak_rss_mib(),
        });
    }
    with_ratios(&mut rows);
    Ok(rows)
}

pub fn run_bench(cfg: &RunConfig, repeats: usize) -> Result<BenchReport> {
    let mut rows = bench_scan(cfg, &SCAN_LENGTHS, repeats)?;
    rows.extend(bench_score(cfg, &RESOLUTIONS, repeats.min(3))?);
    Ok(BenchReport { rows })
}

/// Fails when a scan doubling costs more than [`MAX_SCAN_RATIO`].
pub fn check_scaling(report: &BenchReport) -> Result<()> {
    for (i, ratio) in report.scan_ratios().into_iter().enumerate() {
        if ratio > MAX_SCAN_RATIO {
            return Err(NumericFailure(format!(
                "scan time ratio {ratio:.3} at L = {} exceeds {MAX_SCAN_RATIO}",
                SCAN_LENGTHS[i + 1]
            ))
            .into());
        }
    }
    Ok(())
}
