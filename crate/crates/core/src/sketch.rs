//! Vector sketch data model and the stroke-5 codec.
//!
//! A [`VectorSketch`] is an ordered list of strokes, each an ordered list of
//! timestamped points. The stroke-5 form flattens this into a sequence of
//! `(x, y, q1, q2, q3)` rows with absolute coordinates and a one-hot pen
//! state: `Down` continues the stroke, `Up` closes it after the current
//! point, `End` closes the whole sketch. Coordinates are normalized by the
//! canvas size on encoding.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry;

/// Milliseconds between consecutive points when timestamps are synthesized
/// during decoding (stroke-5 carries no timing).
pub const DECODE_CADENCE_MS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error("sketch has no strokes")]
    EmptySketch,
    #[error("stroke {stroke} has no points")]
    EmptyStroke { stroke: usize },
    #[error("timestamps decrease inside stroke {stroke} at point {point}")]
    TimestampOrder { stroke: usize, point: usize },
    #[error("stroke {stroke} starts before the previous stroke")]
    StrokeOrder { stroke: usize },
    #[error("canvas must be positive and finite, got {w}x{h}")]
    InvalidCanvas { w: f64, h: f64 },
    #[error("non-finite coordinate at stroke {stroke}, point {point}")]
    NonFinite { stroke: usize, point: usize },
    #[error("coordinate outside the canvas at stroke {stroke}, point {point}")]
    OutOfCanvas { stroke: usize, point: usize },
    #[error("stroke-5 sequence is missing its End point (last index {index})")]
    MissingEnd { index: usize },
    #[error("stroke-5 sequence has more than one End point (second at index {index})")]
    MultipleEnd { index: usize },
    #[error("stroke-5 End point at index {index} is not the last point")]
    EndNotLast { index: usize },
    #[error("invalid pen state one-hot at index {index}")]
    InvalidPenState { index: usize },
    #[error("stroke-5 coordinate at index {index} is not finite or outside [0, 1]")]
    InvalidCoordinate { index: usize },
}

/// Pen state after a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PenState {
    Down,
    Up,
    End,
}

impl PenState {
    pub const ALL: [PenState; 3] = [PenState::Down, PenState::Up, PenState::End];

    pub fn index(self) -> usize {
        match self {
            PenState::Down => 0,
            PenState::Up => 1,
            PenState::End => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<PenState> {
        PenState::ALL.get(i).copied()
    }

    /// `(q1, q2, q3)`.
    pub fn one_hot(self) -> [u8; 3] {
        let mut q = [0u8; 3];
        q[self.index()] = 1;
        q
    }

    /// Inverse of [`PenState::one_hot`]; anything but an exact one-hot is rejected.
    pub fn from_one_hot(q: [u8; 3]) -> Option<PenState> {
        match q {
            [1, 0, 0] => Some(PenState::Down),
            [0, 1, 0] => Some(PenState::Up),
            [0, 0, 1] => Some(PenState::End),
            _ => None,
        }
    }
}

/// One stroke-5 point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point5 {
    pub x: f64,
    pub y: f64,
    pub pen: PenState,
}

impl Point5 {
    pub fn new(x: f64, y: f64, pen: PenState) -> Self {
        Point5 { x, y, pen }
    }

    /// The 5-vector `(x, y, q1, q2, q3)`.
    pub fn to_array(self) -> [f64; 5] {
        let q = self.pen.one_hot();
        [self.x, self.y, q[0] as f64, q[1] as f64, q[2] as f64]
    }
}

/// The decoder's first conditioning point, `(0, 0, 1, 0, 0)`.
pub fn start_token() -> Point5 {
    Point5::new(0.0, 0.0, PenState::Down)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokePoint {
    pub x: f64,
    pub y: f64,
    /// Milliseconds.
    pub t: u64,
}

impl StrokePoint {
    pub fn new(x: f64, y: f64, t: u64) -> Self {
        StrokePoint { x, y, t }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stroke {
    pub points: Vec<StrokePoint>,
}

impl Stroke {
    pub fn new(points: Vec<StrokePoint>) -> Self {
        Stroke { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xy(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.y)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSketch {
    pub sketch_id: String,
    pub user_id: String,
    pub strokes: Vec<Stroke>,
    pub canvas_w: f64,
    pub canvas_h: f64,
}

impl VectorSketch {
    pub fn new(
        sketch_id: impl Into<String>,
        user_id: impl Into<String>,
        strokes: Vec<Stroke>,
        canvas_w: f64,
        canvas_h: f64,
    ) -> Result<Self, SketchError> {
        let sketch = VectorSketch {
            sketch_id: sketch_id.into(),
            user_id: user_id.into(),
            strokes,
            canvas_w,
            canvas_h,
        };
        sketch.validate()?;
        Ok(sketch)
    }

    /// Checks every structural invariant. A sketch with zero strokes is
    /// invalid; it can only appear as the output of full stroke masking.
    pub fn validate(&self) -> Result<(), SketchError> {
        self.validate_canvas()?;
        if self.strokes.is_empty() {
            return Err(SketchError::EmptySketch);
        }
        let mut prev_start: Option<u64> = None;
        for (si, stroke) in self.strokes.iter().enumerate() {
            let first = stroke.points.first().ok_or(SketchError::EmptyStroke { stroke: si })?;
            if let Some(prev) = prev_start {
                if first.t < prev {
                    return Err(SketchError::StrokeOrder { stroke: si });
                }
            }
            prev_start = Some(first.t);
            for (pi, pair) in stroke.points.windows(2).enumerate() {
                if pair[1].t < pair[0].t {
                    return Err(SketchError::TimestampOrder { stroke: si, point: pi + 1 });
                }
            }
            for (pi, p) in stroke.points.iter().enumerate() {
                if !p.x.is_finite() || !p.y.is_finite() {
                    return Err(SketchError::NonFinite { stroke: si, point: pi });
                }
            }
        }
        Ok(())
    }

    fn validate_canvas(&self) -> Result<(), SketchError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.canvas_w) && ok(self.canvas_h) {
            Ok(())
        } else {
            Err(SketchError::InvalidCanvas { w: self.canvas_w, h: self.canvas_h })
        }
    }

    pub fn stroke_count(&self) -> usize {
        self.strokes.len()
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Stroke::len).sum()
    }

    /// Number of points in each stroke, in order.
    pub fn partition(&self) -> Vec<usize> {
        self.strokes.iter().map(Stroke::len).collect()
    }
}

/// Divides coordinates by the canvas size; the result has a 1x1 canvas.
pub fn normalize(sketch: &VectorSketch) -> Result<VectorSketch, SketchError> {
    sketch.validate_canvas()?;
    let (w, h) = (sketch.canvas_w, sketch.canvas_h);
    let strokes = sketch
        .strokes
        .iter()
        .map(|s| {
            Stroke::new(s.points.iter().map(|p| StrokePoint::new(p.x / w, p.y / h, p.t)).collect())
        })
        .collect();
    Ok(VectorSketch {
        sketch_id: sketch.sketch_id.clone(),
        user_id: sketch.user_id.clone(),
        strokes,
        canvas_w: 1.0,
        canvas_h: 1.0,
    })
}

/// A validated stroke-5 sequence: exactly one `End`, in last position.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke5Sequence {
    points: Vec<Point5>,
}

impl Stroke5Sequence {
    pub fn new(points: Vec<Point5>) -> Result<Self, SketchError> {
        validate_points(&points)?;
        Ok(Stroke5Sequence { points })
    }

    pub fn points(&self) -> &[Point5] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point5> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn stroke_count(&self) -> usize {
        self.points.iter().filter(|p| p.pen != PenState::Down).count()
    }

    /// Index ranges `[start, end)` of each stroke.
    pub fn stroke_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = 0;
        for (i, p) in self.points.iter().enumerate() {
            if p.pen != PenState::Down {
                spans.push((start, i + 1));
                start = i + 1;
            }
        }
        spans
    }

    pub fn decode(&self) -> VectorSketch {
        let mut strokes = Vec::new();
        let mut current = Vec::new();
        for (k, p) in self.points.iter().enumerate() {
            current.push(StrokePoint::new(p.x, p.y, k as u64 * DECODE_CADENCE_MS));
            if p.pen != PenState::Down {
                strokes.push(Stroke::new(core::mem::take(&mut current)));
            }
            if p.pen == PenState::End {
                break;
            }
        }
        VectorSketch {
            sketch_id: String::new(),
            user_id: String::new(),
            strokes,
            canvas_w: 1.0,
            canvas_h: 1.0,
        }
    }
}

fn validate_points(points: &[Point5]) -> Result<(), SketchError> {
    if points.is_empty() {
        return Err(SketchError::EmptySketch);
    }
    let ends: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.pen == PenState::End)
        .map(|(i, _)| i)
        .collect();
    match ends.as_slice() {
        [] => return Err(SketchError::MissingEnd { index: points.len() - 1 }),
        [only] if *only != points.len() - 1 => return Err(SketchError::EndNotLast { index: *only }),
        [_] => {}
        [_, second, ..] => return Err(SketchError::MultipleEnd { index: *second }),
    }
    for (i, p) in points.iter().enumerate() {
        let in_unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !in_unit(p.x) || !in_unit(p.y) {
            return Err(SketchError::InvalidCoordinate { index: i });
        }
    }
    Ok(())
}

/// Builds a stroke-5 sequence from `(x, y, q1, q2, q3)` rows.
pub fn stroke5_from_rows(rows: &[([f64; 2], [u8; 3])]) -> Result<Stroke5Sequence, SketchError> {
    let points = rows
        .iter()
        .enumerate()
        .map(|(i, (xy, q))| {
            PenState::from_one_hot(*q)
                .map(|pen| Point5::new(xy[0], xy[1], pen))
                .ok_or(SketchError::InvalidPenState { index: i })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Stroke5Sequence::new(points)
}

/// Flattens a sketch into stroke-5 with canvas-normalized absolute coordinates.
pub fn encode_stroke5(sketch: &VectorSketch) -> Result<Stroke5Sequence, SketchError> {
    sketch.validate()?;
    let (w, h) = (sketch.canvas_w, sketch.canvas_h);
    let n_strokes = sketch.strokes.len();
    let mut points = Vec::with_capacity(sketch.point_count());
    for (si, stroke) in sketch.strokes.iter().enumerate() {
        let last = stroke.points.len() - 1;
        for (pi, p) in stroke.points.iter().enumerate() {
            let (x, y) = (p.x / w, p.y / h);
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(SketchError::OutOfCanvas { stroke: si, point: pi });
            }
            let pen = if pi < last {
                PenState::Down
            } else if si + 1 < n_strokes {
                PenState::Up
            } else {
                PenState::End
            };
            points.push(Point5::new(x, y, pen));
        }
    }
    Ok(Stroke5Sequence { points })
}

/// Validates raw points and splits them into strokes. Timestamps are
/// synthesized at [`DECODE_CADENCE_MS`] per point; the canvas is 1x1.
pub fn decode_stroke5(points: &[Point5]) -> Result<VectorSketch, SketchError> {
    validate_points(points)?;
    Ok(Stroke5Sequence { points: points.to_vec() }.decode())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchStats {
    pub stroke_count: usize,
    pub point_count: usize,
    pub mean_points_per_stroke: f64,
    /// Polyline length of each stroke in normalized canvas units.
    pub stroke_lengths: Vec<f64>,
}

pub fn sketch_stats(sketch: &VectorSketch) -> Result<SketchStats, SketchError> {
    sketch.validate()?;
    let normalized = normalize(sketch)?;
    let stroke_count = sketch.stroke_count();
    let point_count = sketch.point_count();
    Ok(SketchStats {
        stroke_count,
        point_count,
        mean_points_per_stroke: point_count as f64 / stroke_count as f64,
        stroke_lengths: normalized.strokes.iter().map(geometry::stroke_length).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_sketches: usize,
    pub median_stroke_count: f64,
    pub mean_stroke_count: f64,
    /// Total points over total strokes.
    pub mean_points_per_stroke: f64,
    pub total_points: usize,
}

pub fn corpus_stats(sketches: &[VectorSketch]) -> Result<CorpusStats, SketchError> {
    if sketches.is_empty() {
        return Err(SketchError::EmptySketch);
    }
    let mut counts = Vec::with_capacity(sketches.len());
    let mut total_points = 0usize;
    for s in sketches {
        s.validate()?;
        counts.push(s.stroke_count());
        total_points += s.point_count();
    }
    let total_strokes: usize = counts.iter().sum();
    Ok(CorpusStats {
        n_sketches: sketches.len(),
        median_stroke_count: median(&mut counts),
        mean_stroke_count: total_strokes as f64 / sketches.len() as f64,
        mean_points_per_stroke: total_points as f64 / total_strokes as f64,
        total_points,
    })
}

/// Median of a non-empty slice; even lengths average the two middle values.
fn median(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}
