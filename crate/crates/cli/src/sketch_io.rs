//! NDJSON sketch files and stroke-5 files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scenesketch_core::sketch::{stroke5_from_rows, Stroke5Sequence, StrokePoint};
use scenesketch_core::{Stroke, VectorSketch};

use crate::error::{Error, Result};
use crate::fsio;

pub const FORMAT_VERSION: u32 = 1;

fn default_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SketchLine {
    #[serde(default = "default_version")]
    format_version: u32,
    id: String,
    user: String,
    canvas: [f64; 2],
    strokes: Vec<Vec<(f64, f64, u64)>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stroke5Line {
    #[serde(default = "default_version")]
    format_version: u32,
    id: String,
    points: Vec<(f64, f64, u8, u8, u8)>,
}

fn check_version(v: u32) -> std::result::Result<(), String> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(format!("unsupported format_version {v}, expected {FORMAT_VERSION}"))
    }
}

/// One canonical NDJSON line, without the trailing newline.
pub fn sketch_to_line(s: &VectorSketch) -> String {
    let line = SketchLine {
        format_version: FORMAT_VERSION,
        id: s.sketch_id.clone(),
        user: s.user_id.clone(),
        canvas: [s.canvas_w, s.canvas_h],
        strokes: s.strokes.iter().map(|st| st.points.iter().map(|p| (p.x, p.y, p.t)).collect()).collect(),
    };
    serde_json::to_string(&line).expect("sketch lines always serialize")
}

pub fn sketch_from_line(text: &str) -> std::result::Result<VectorSketch, String> {
    let line: SketchLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
    check_version(line.format_version)?;
    let strokes = line
        .strokes
        .into_iter()
        .map(|pts| Stroke::new(pts.into_iter().map(|(x, y, t)| StrokePoint::new(x, y, t)).collect()))
        .collect();
    VectorSketch::new(line.id, line.user, strokes, line.canvas[0], line.canvas[1]).map_err(|e| e.to_string())
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_sketches(path: &Path, text: &str) -> Result<Vec<VectorSketch>> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (n, line) in lines(text) {
        let s = sketch_from_line(line).map_err(|m| Error::parse(path, n, m))?;
        if !seen.insert(s.sketch_id.clone()) {
            return Err(Error::parse(path, n, format!("duplicate sketch id {:?}", s.sketch_id)));
        }
        out.push(s);
    }
    Ok(out)
}

/// Reads every sketch or fails; a partial list is never returned.
pub fn load_sketches(path: &Path) -> Result<Vec<VectorSketch>> {
    parse_sketches(path, &fsio::read_to_string(path)?)
}

pub fn sketches_to_string(sketches: &[VectorSketch]) -> String {
    let mut s = String::new();
    for sk in sketches {
        s.push_str(&sketch_to_line(sk));
        s.push('\n');
    }
    s
}

pub fn save_sketches(path: &Path, sketches: &[VectorSketch]) -> Result<()> {
    fsio::write_atomic(path, sketches_to_string(sketches).as_bytes())
}

/// A stroke-5 sequence with the id of the sketch it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke5Record {
    pub id: String,
    pub sequence: Stroke5Sequence,
}

pub fn stroke5_to_line(r: &Stroke5Record) -> String {
    let line = Stroke5Line {
        format_version: FORMAT_VERSION,
        id: r.id.clone(),
        points: r
            .sequence
            .points()
            .iter()
            .map(|p| {
                let q = p.pen.one_hot();
                (p.x, p.y, q[0], q[1], q[2])
            })
            .collect(),
    };
    serde_json::to_string(&line).expect("stroke-5 lines always serialize")
}

pub fn stroke5_from_line(text: &str) -> std::result::Result<Stroke5Record, String> {
    let line: Stroke5Line = serde_json::from_str(text).map_err(|e| e.to_string())?;
    check_version(line.format_version)?;
    let rows: Vec<([f64; 2], [u8; 3])> = line.points.iter().map(|&(x, y, a, b, c)| ([x, y], [a, b, c])).collect();
    let sequence = stroke5_from_rows(&rows).map_err(|e| e.to_string())?;
    Ok(Stroke5Record { id: line.id, sequence })
}

pub fn load_stroke5(path: &Path) -> Result<Vec<Stroke5Record>> {
    let text = fsio::read_to_string(path)?;
    lines(&text).map(|(n, l)| stroke5_from_line(l).map_err(|m| Error::parse(path, n, m))).collect()
}

pub fn save_stroke5(path: &Path, records: &[Stroke5Record]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&stroke5_to_line(r));
        s.push('\n');
    }
    fsio::write_atomic(path, s.as_bytes())
}
