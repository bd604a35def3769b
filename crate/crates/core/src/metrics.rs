//! Detection metrics: AUROC, maximum F1 and average precision.
//!
//! All three are computed from a single descending sort; tied scores are
//! handled as one threshold step. Labels are `true` for anomalous.

use std::fmt::Write as _;

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            stage: "scores",
            step: i,
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Groups of tied scores in descending order, as `(positives, negatives)`.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last = f64::NAN;
    for i in idx {
        // -0.0 and 0.0 compare equal here, unlike total_cmp
        if groups.is_empty() || scores[i] != last {
            groups.push((0, 0));
            last = scores[i];
        }
        let g = groups.last_mut().expect("pushed above");
        if labels[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes"));
    }
    // twice the win count, an exact integer
    let mut negatives_below = neg as u64;
    let mut doubled_wins = 0u64;
    for (p, n) in tie_groups(scores, labels) {
        negatives_below -= n as u64;
        doubled_wins += p as u64 * (2 * negatives_below + n as u64);
    }
    Ok(doubled_wins as f64 / (2 * pos as u64 * neg as u64) as f64)
}

/// Best F1 over thresholds placed at every distinct score (`score >= t`).
pub fn max_f1(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("F1 needs at least one positive"));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = 0.0f64;
    for (p, n) in tie_groups(scores, labels) {
        tp += p;
        fp += n;
        if tp > 0 {
            best = best.max(2.0 * tp as f64 / (2 * tp + fp + (pos - tp)) as f64);
        }
    }
    Ok(best)
}

/// `Σ_n (R_n - R_{n-1}) P_n` over the distinct thresholds.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("AP needs at least one positive"));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for (p, n) in tie_groups(scores, labels) {
        tp += p;
        fp += n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

/// One metric triple; `None` where the metric is undefined.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSet {
    pub auroc: Option<f64>,
    pub max_f1: Option<f64>,
    pub ap: Option<f64>,
}

impl MetricSet {
    pub fn compute(scores: &[f64], labels: &[bool]) -> Result<Self> {
        let defined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            auroc: defined(auroc(scores, labels))?,
            max_f1: defined(max_f1(scores, labels))?,
            ap: defined(average_precision(scores, labels))?,
        })
    }
}

/// A scored test image with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalImage {
    /// Row-major pixel scores.
    pub scores: Vec<f64>,
    /// Row-major defect mask, same length as `scores`.
    pub mask: Vec<bool>,
    pub anomalous: bool,
}

impl EvalImage {
    pub fn image_score(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CategoryMetrics {
    /// Pixels of every test image pooled together.
    pub pixel: MetricSet,
    /// Per-image maximum score.
    pub image: MetricSet,
}

pub fn evaluate_category(images: &[EvalImage]) -> Result<CategoryMetrics> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("no scored images to evaluate".into()));
    }
    let mut pixel_scores = Vec::new();
    let mut pixel_labels = Vec::new();
    for (i, img) in images.iter().enumerate() {
        if img.scores.len() != img.mask.len() {
            return Err(Error::ShapeMismatch(format!(
                "image {i}: {} scores for a mask of {} pixels",
                img.scores.len(),
                img.mask.len()
            )));
        }
        pixel_scores.extend_from_slice(&img.scores);
        pixel_labels.extend_from_slice(&img.mask);
    }
    let image_scores: Vec<f64> = images.iter().map(EvalImage::image_score).collect();
    let image_labels: Vec<bool> = images.iter().map(|i| i.anomalous).collect();
    Ok(CategoryMetrics {
        pixel: MetricSet::compute(&pixel_scores, &pixel_labels)?,
        image: MetricSet::compute(&image_scores, &image_labels)?,
    })
}

pub const METRICS_CSV_HEADER: &str = "category,level,auroc,max_f1,ap";

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

/// Two CSV rows (`pixel`, `image`) without the header.
pub fn metrics_csv_rows(category: &str, metrics: &CategoryMetrics) -> String {
    let mut out = String::new();
    for (level, m) in [("pixel", &metrics.pixel), ("image", &metrics.image)] {
        let _ = writeln!(
            out,
            "{category},{level},{},{},{}",
            fmt_metric(m.auroc),
            fmt_metric(m.max_f1),
            fmt_metric(m.ap)
        );
    }
    out
}
