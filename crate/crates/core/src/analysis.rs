//! Stroke-order analyses: the coarse-to-fine length curve and stroke masking.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::stroke_length;
use crate::math;
use crate::sketch::{normalize, SketchError, VectorSketch};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("mask fraction must lie in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// How a stroke's position in the drawing is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StrokeTime {
    /// `k / n` for the `k`-th of `n` strokes (0-based).
    #[default]
    Ordinal,
    /// Start timestamp rescaled so the first stroke is 0 and the last
    /// stroke's start is 1. Single-stroke sketches sit at 0.
    Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveBin {
    pub bin: usize,
    /// Bin covers `[lo, hi)`; the last bin also holds 1.
    pub lo: f64,
    pub hi: f64,
    pub mean_length: f64,
    pub n_strokes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseToFineCurve {
    pub n_bins: usize,
    /// Non-empty bins only, in ascending order.
    pub bins: Vec<CurveBin>,
}

impl CoarseToFineCurve {
    pub fn mean_lengths(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean_length).collect()
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.bins.windows(2).all(|w| w[1].mean_length < w[0].mean_length)
    }
}

/// Bin index for a normalized position; positions at or past 1 land in the last bin.
pub fn bin_of(position: f64, n_bins: usize) -> usize {
    let b = math::floor(position * n_bins as f64);
    if b < 0.0 {
        0
    } else {
        (b as usize).min(n_bins - 1)
    }
}

fn positions(sketch: &VectorSketch, time: StrokeTime) -> Vec<f64> {
    let n = sketch.strokes.len();
    match time {
        StrokeTime::Ordinal => (0..n).map(|k| k as f64 / n as f64).collect(),
        StrokeTime::Timestamp => {
            let starts: Vec<u64> = sketch.strokes.iter().map(|s| s.points[0].t).collect();
            let (first, last) = (starts[0], starts[n - 1]);
            if last == first {
                return vec![0.0; n];
            }
            starts.iter().map(|&t| (t - first) as f64 / (last - first) as f64).collect()
        }
    }
}

/// Mean stroke length per drawing-time bin across a corpus. Lengths are
/// measured on canvas-normalized coordinates; the per-bin sums run in corpus
/// order.
pub fn coarse_to_fine(corpus: &[VectorSketch], n_bins: usize, time: StrokeTime) -> Result<CoarseToFineCurve, AnalysisError> {
    if corpus.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    if n_bins < 2 {
        return Err(AnalysisError::TooFewBins(n_bins));
    }
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for sketch in corpus {
        sketch.validate()?;
        let norm = normalize(sketch)?;
        for (stroke, p) in norm.strokes.iter().zip(positions(sketch, time)) {
            let b = bin_of(p, n_bins);
            sums[b] += stroke_length(stroke);
            counts[b] += 1;
        }
    }
    let width = 1.0 / n_bins as f64;
    let bins = (0..n_bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| CurveBin {
            bin: b,
            lo: b as f64 * width,
            hi: if b + 1 == n_bins { 1.0 } else { (b + 1) as f64 * width },
            mean_length: sums[b] / counts[b] as f64,
            n_strokes: counts[b],
        })
        .collect();
    Ok(CoarseToFineCurve { n_bins, bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskEnd {
    /// Drop the first strokes drawn.
    Early,
    /// Drop the last strokes drawn.
    Late,
}

/// Number of strokes [`mask_strokes`] removes: `round(fraction * n)`,
/// half away from zero, but never all of them unless `fraction == 1`.
pub fn masked_count(n: usize, fraction: f64) -> Result<usize, AnalysisError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AnalysisError::InvalidFraction(fraction));
    }
    if fraction == 1.0 {
        return Ok(n);
    }
    let r = math::round(fraction * n as f64) as usize;
    Ok(r.min(n.saturating_sub(1)))
}

/// Removes strokes from one end of the drawing order, keeping the rest in
/// order. With `fraction == 1` the result has no strokes; such a sketch
/// fails [`VectorSketch::validate`] but still rasterizes to a blank image.
pub fn mask_strokes(sketch: &VectorSketch, fraction: f64, end: MaskEnd) -> Result<VectorSketch, AnalysisError> {
    sketch.validate()?;
    let n = sketch.strokes.len();
    let remove = masked_count(n, fraction)?;
    let kept = match end {
        MaskEnd::Early => sketch.strokes[remove..].to_vec(),
        MaskEnd::Late => sketch.strokes[..n - remove].to_vec(),
    };
    Ok(VectorSketch { strokes: kept, ..sketch.clone() })
}
