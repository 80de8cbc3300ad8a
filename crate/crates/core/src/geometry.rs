//! Polyline geometry: RDP simplification, stroke lengths and rasterization.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::sketch::{SketchError, Stroke, StrokePoint, VectorSketch};

/// Smallest raster side accepted by [`rasterize`].
pub const MIN_RASTER_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("epsilon must be finite and nonnegative, got {0}")]
    InvalidEpsilon(f64),
    #[error("raster must be at least {min}x{min} with thickness >= 1, got {width}x{height} thickness {thickness}")]
    InvalidRaster { width: usize, height: usize, thickness: usize, min: usize },
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Row-major grayscale image with intensities in `[0, 1]`; 1 is ink.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterSketch {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl RasterSketch {
    pub fn blank(width: usize, height: usize) -> Self {
        RasterSketch { width, height, pixels: vec![0.0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v > 0.0).count()
    }

    fn stamp(&mut self, cx: i64, cy: i64, thickness: usize) {
        let lo = -((thickness as i64 - 1) / 2);
        let hi = thickness as i64 / 2;
        for dy in lo..=hi {
            for dx in lo..=hi {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                    self.pixels[y as usize * self.width + x as usize] = 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplifyReport {
    pub epsilon: f64,
    pub points_before: usize,
    pub points_after: usize,
}

/// Distance from `p` to the infinite line through `a` and `b`; falls back to
/// the distance to `a` when the two coincide.
fn perpendicular_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = math::hypot(dx, dy);
    if len == 0.0 {
        return math::hypot(p.0 - a.0, p.1 - a.1);
    }
    ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / len
}

/// Indices of the points RDP keeps, in ascending order. A point survives
/// when its distance to the current chord strictly exceeds `epsilon`.
pub fn rdp_keep_indices(polyline: &[(f64, f64)], epsilon: f64) -> Vec<usize> {
    let n = polyline.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((start, end)) = stack.pop() {
        if end <= start + 1 {
            continue;
        }
        let (a, b) = (polyline[start], polyline[end]);
        let mut best = (start, -1.0f64);
        for (i, &p) in polyline.iter().enumerate().take(end).skip(start + 1) {
            let d = perpendicular_distance(p, a, b);
            if d > best.1 {
                best = (i, d);
            }
        }
        if best.1 > epsilon {
            keep[best.0] = true;
            stack.push((best.0, end));
            stack.push((start, best.0));
        }
    }
    keep.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i).collect()
}

/// Ramer-Douglas-Peucker simplification. Endpoints are always kept and the
/// output is a subsequence of the input.
pub fn rdp_simplify(polyline: &[(f64, f64)], epsilon: f64) -> Vec<(f64, f64)> {
    rdp_keep_indices(polyline, epsilon).into_iter().map(|i| polyline[i]).collect()
}

/// Simplifies every stroke independently. `epsilon` is measured in
/// normalized canvas units; the returned sketch keeps the input's
/// coordinates and timestamps for the surviving points.
pub fn simplify_sketch(
    sketch: &VectorSketch,
    epsilon: f64,
) -> Result<(VectorSketch, SimplifyReport), GeometryError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(GeometryError::InvalidEpsilon(epsilon));
    }
    sketch.validate()?;
    let (w, h) = (sketch.canvas_w, sketch.canvas_h);
    let mut after = 0;
    let strokes: Vec<Stroke> = sketch
        .strokes
        .iter()
        .map(|s| {
            let scaled: Vec<(f64, f64)> = s.points.iter().map(|p| (p.x / w, p.y / h)).collect();
            let kept: Vec<StrokePoint> =
                rdp_keep_indices(&scaled, epsilon).into_iter().map(|i| s.points[i]).collect();
            after += kept.len();
            Stroke::new(kept)
        })
        .collect();
    let report = SimplifyReport { epsilon, points_before: sketch.point_count(), points_after: after };
    let out = VectorSketch { strokes, ..sketch.clone() };
    Ok((out, report))
}

/// Smallest epsilon (to bisection precision) whose simplification fits
/// within `target_points`. Returns the search ceiling when no epsilon can
/// reach the budget, i.e. when it is below one or two points per stroke.
pub fn epsilon_for_budget(sketch: &VectorSketch, target_points: usize) -> Result<f64, GeometryError> {
    sketch.validate()?;
    let count = |eps: f64| simplify_sketch(sketch, eps).map(|(_, r)| r.points_after);
    if count(0.0)? <= target_points {
        return Ok(0.0);
    }
    // Normalized coordinates never lie farther apart than the unit diagonal.
    let mut hi = 2.0f64;
    if count(hi)? > target_points {
        return Ok(hi);
    }
    let mut lo = 0.0f64;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if count(mid)? <= target_points {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Sum of segment lengths; 0 for a single point.
pub fn stroke_length(stroke: &Stroke) -> f64 {
    stroke
        .points
        .windows(2)
        .map(|w| math::hypot(w[1].x - w[0].x, w[1].y - w[0].y))
        .sum()
}

fn to_pixel(v: f64, canvas: f64, side: usize) -> i64 {
    let p = math::floor(v / canvas * side as f64) as i64;
    // The closed far edge maps onto the last pixel.
    if p == side as i64 && v == canvas {
        side as i64 - 1
    } else {
        p
    }
}

fn draw_line(raster: &mut RasterSketch, from: (i64, i64), to: (i64, i64), thickness: usize) {
    let (mut x0, mut y0) = from;
    let (x1, y1) = to;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        raster.stamp(x0, y0, thickness);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Draws every stroke as connected integer line segments dilated by a
/// `thickness`-sided square; pen-up gaps stay blank. Pixels are exactly 0
/// or 1. Ink outside the raster is clipped.
pub fn rasterize(
    sketch: &VectorSketch,
    width: usize,
    height: usize,
    thickness: usize,
) -> Result<RasterSketch, GeometryError> {
    if width < MIN_RASTER_SIDE || height < MIN_RASTER_SIDE || thickness == 0 {
        return Err(GeometryError::InvalidRaster { width, height, thickness, min: MIN_RASTER_SIDE });
    }
    let mut raster = RasterSketch::blank(width, height);
    for stroke in &sketch.strokes {
        let px: Vec<(i64, i64)> = stroke
            .points
            .iter()
            .map(|p| (to_pixel(p.x, sketch.canvas_w, width), to_pixel(p.y, sketch.canvas_h, height)))
            .collect();
        match px.as_slice() {
            [] => {}
            [only] => raster.stamp(only.0, only.1, thickness),
            _ => {
                for seg in px.windows(2) {
                    draw_line(&mut raster, seg[0], seg[1], thickness);
                }
            }
        }
    }
    Ok(raster)
}
