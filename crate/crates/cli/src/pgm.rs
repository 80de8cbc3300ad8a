//! Binary PGM (P5) rasters, 8 bits per pixel.
//!
//! Layout: `P5\n# format_version 1\n{width} {height}\n255\n`, then
//! `width * height` bytes, row-major from the top-left pixel. A pixel of
//! intensity `v` is stored as `round(v * 255)`.

use std::path::Path;

use scenesketch_core::RasterSketch;

use crate::error::{Error, Result};
use crate::fsio;

pub fn encode(r: &RasterSketch) -> Vec<u8> {
    let mut out = format!("P5\n# format_version 1\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend(r.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Parses a P5 file with maxval 255. Comment lines in the header are skipped.
pub fn decode(bytes: &[u8]) -> std::result::Result<RasterSketch, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ASCII PGM header")?.to_string());
    }
    // Exactly one whitespace byte separates the header from the pixels.
    pos += 1;
    if fields[0] != "P5" {
        return Err(format!("expected P5 magic, got {:?}", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PGM header field {s:?}"));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(format!("only maxval 255 is supported, got {max}"));
    }
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != w * h {
        return Err(format!("expected {} pixel bytes, found {}", w * h, data.len()));
    }
    Ok(RasterSketch { width: w, height: h, pixels: data.iter().map(|&b| b as f64 / 255.0).collect() })
}

pub fn save(path: &Path, r: &RasterSketch) -> Result<()> {
    fsio::write_atomic(path, &encode(r))
}

pub fn load(path: &Path) -> Result<RasterSketch> {
    decode(&fsio::read_bytes(path)?).map_err(|m| Error::parse(path, 1, m))
}
