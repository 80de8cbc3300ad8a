//! Synthetic dataset directories written by `gen-data`.
//!
//! ```text
//! DIR/sketches.ndjson   sketches, one per line
//! DIR/scenes.ndjson     primitives and draw order per scene
//! DIR/photos/ID.pgm     photo raster for sketch ID
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scenesketch_core::synth::{Primitive, SyntheticScene};
use scenesketch_core::{RasterSketch, VectorSketch};

use crate::error::{Error, Result};
use crate::sketch_io::{self, FORMAT_VERSION};
use crate::{fsio, pgm};

pub const SKETCHES: &str = "sketches.ndjson";
pub const SCENES: &str = "scenes.ndjson";
pub const PHOTOS: &str = "photos";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum PrimitiveRecord {
    Box { cx: f64, cy: f64, half: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
    Zigzag { x0: f64, y0: f64, width: f64, amplitude: f64, teeth: usize },
}

impl From<&Primitive> for PrimitiveRecord {
    fn from(p: &Primitive) -> Self {
        match *p {
            Primitive::Box { cx, cy, half } => PrimitiveRecord::Box { cx, cy, half },
            Primitive::Circle { cx, cy, r } => PrimitiveRecord::Circle { cx, cy, r },
            Primitive::Zigzag { x0, y0, width, amplitude, teeth } => PrimitiveRecord::Zigzag { x0, y0, width, amplitude, teeth },
        }
    }
}

#[derive(Debug, Serialize)]
struct SceneLine<'a> {
    format_version: u32,
    id: &'a str,
    seed: u64,
    draw_order: &'a [usize],
    primitives: Vec<PrimitiveRecord>,
}

/// Ids become file names, so they are limited to a portable alphabet.
pub fn check_file_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("sketch id {id:?} cannot be used as a file name")))
    }
}

pub fn photo_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(PHOTOS).join(format!("{id}.pgm"))
}

pub fn write_dataset(dir: &Path, scenes: &[SyntheticScene]) -> Result<()> {
    fsio::create_dir_all(&dir.join(PHOTOS))?;
    let sketches: Vec<VectorSketch> = scenes.iter().map(|s| s.sketch.clone()).collect();
    sketch_io::save_sketches(&dir.join(SKETCHES), &sketches)?;
    let mut text = String::new();
    for s in scenes {
        let line = SceneLine {
            format_version: FORMAT_VERSION,
            id: &s.sketch.sketch_id,
            seed: s.seed,
            draw_order: &s.draw_order,
            primitives: s.primitives.iter().map(PrimitiveRecord::from).collect(),
        };
        text.push_str(&serde_json::to_string(&line).expect("scene lines always serialize"));
        text.push('\n');
        pgm::save(&photo_path(dir, &s.sketch.sketch_id), &s.photo)?;
    }
    fsio::write_atomic(&dir.join(SCENES), text.as_bytes())
}

/// Sketches and their photos, in file order.
pub fn load_pairs(dir: &Path) -> Result<Vec<(VectorSketch, RasterSketch)>> {
    let sketches = sketch_io::load_sketches(&dir.join(SKETCHES))?;
    sketches
        .into_iter()
        .map(|s| {
            check_file_id(&s.sketch_id)?;
            let photo = pgm::load(&photo_path(dir, &s.sketch_id))?;
            Ok((s, photo))
        })
        .collect()
}
