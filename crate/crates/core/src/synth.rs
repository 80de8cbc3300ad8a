//! Synthetic paired scenes: outline "photos" and jittered sketches of them.
//!
//! A scene is a few primitives (boxes, circles, zigzags). The photo is the
//! exact outline raster; the sketch draws each primitive as one stroke with
//! Gaussian jitter on every vertex, in a shuffled order that is recorded.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{self, GeometryError, RasterSketch};
use crate::math;
use crate::rng::Rng;
use crate::sketch::{SketchError, Stroke, StrokePoint, VectorSketch};

/// Milliseconds between consecutive points of a synthetic stroke.
pub const POINT_INTERVAL_MS: u64 = 10;
/// Extra pause between strokes.
pub const STROKE_GAP_MS: u64 = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Spec(&'static str),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Axis-aligned square outline, 5 vertices (closed).
    Box { cx: f64, cy: f64, half: f64 },
    /// Closed polygon approximating a circle, 9 vertices.
    Circle { cx: f64, cy: f64, r: f64 },
    /// Open zigzag of `teeth` vertices, left to right.
    Zigzag { x0: f64, y0: f64, width: f64, amplitude: f64, teeth: usize },
}

impl Primitive {
    pub fn vertices(&self) -> Vec<(f64, f64)> {
        match *self {
            Primitive::Box { cx, cy, half } => alloc::vec![
                (cx - half, cy - half),
                (cx + half, cy - half),
                (cx + half, cy + half),
                (cx - half, cy + half),
                (cx - half, cy - half),
            ],
            Primitive::Circle { cx, cy, r } => (0..=8)
                .map(|k| {
                    let a = if k == 8 { 0.0 } else { k as f64 * core::f64::consts::FRAC_PI_4 };
                    (cx + r * math::cos(a), cy + r * math::sin(a))
                })
                .collect(),
            Primitive::Zigzag { x0, y0, width, amplitude, teeth } => (0..teeth)
                .map(|k| {
                    let x = x0 + width * k as f64 / (teeth - 1) as f64;
                    let y = if k % 2 == 0 { y0 } else { y0 + amplitude };
                    (x, y)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Square canvas side in sketch units.
    pub canvas: f64,
    pub min_primitives: usize,
    pub max_primitives: usize,
    /// Standard deviation of vertex jitter, in canvas units.
    pub jitter: f64,
    pub photo_size: usize,
    pub photo_thickness: usize,
    pub n_users: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            canvas: 256.0,
            min_primitives: 1,
            max_primitives: 4,
            jitter: 2.0,
            photo_size: 64,
            photo_thickness: 1,
            n_users: 5,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if !(self.canvas.is_finite() && self.canvas >= 64.0) {
            return Err(SynthError::Spec("canvas must be at least 64"));
        }
        if self.min_primitives == 0 || self.min_primitives > self.max_primitives {
            return Err(SynthError::Spec("need 1 <= min_primitives <= max_primitives"));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(SynthError::Spec("jitter must be finite and nonnegative"));
        }
        if self.n_users == 0 {
            return Err(SynthError::Spec("n_users must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    pub primitives: Vec<Primitive>,
    /// `draw_order[k]` is the primitive drawn as stroke `k`.
    pub draw_order: Vec<usize>,
    pub photo: RasterSketch,
    pub sketch: VectorSketch,
}

fn random_primitive(rng: &mut Rng, canvas: f64) -> Primitive {
    // Keeps every vertex at least 8 units inside the canvas before jitter.
    let s = canvas / 256.0;
    let centre = |rng: &mut Rng| rng.uniform(48.0 * s, 208.0 * s);
    match rng.below(3) {
        0 => Primitive::Box { cx: centre(rng), cy: centre(rng), half: rng.uniform(12.0 * s, 40.0 * s) },
        1 => Primitive::Circle { cx: centre(rng), cy: centre(rng), r: rng.uniform(12.0 * s, 40.0 * s) },
        _ => {
            let width = rng.uniform(40.0 * s, 80.0 * s);
            Primitive::Zigzag {
                x0: rng.uniform(8.0 * s, canvas - 8.0 * s - width),
                y0: rng.uniform(8.0 * s, 200.0 * s),
                width,
                amplitude: rng.uniform(12.0 * s, 40.0 * s),
                teeth: 3 + rng.below(5),
            }
        }
    }
}

fn clamp(v: f64, hi: f64) -> f64 {
    v.max(0.0).min(hi)
}

/// One scene from its own seed.
pub fn generate_scene(id: String, user_id: String, seed: u64, spec: &SynthSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(seed);
    let span = spec.max_primitives - spec.min_primitives + 1;
    let n = spec.min_primitives + rng.below(span);
    let primitives: Vec<Primitive> = (0..n).map(|_| random_primitive(&mut rng, spec.canvas)).collect();
    let mut draw_order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut draw_order);

    let outline = |verts: Vec<(f64, f64)>, t0: u64| {
        Stroke::new(
            verts
                .into_iter()
                .enumerate()
                .map(|(k, (x, y))| StrokePoint::new(x, y, t0 + k as u64 * POINT_INTERVAL_MS))
                .collect(),
        )
    };
    let exact: Vec<Stroke> = primitives.iter().map(|p| outline(p.vertices(), 0)).collect();
    let photo_src = VectorSketch::new(id.clone(), user_id.clone(), exact, spec.canvas, spec.canvas)?;
    let photo = geometry::rasterize(&photo_src, spec.photo_size, spec.photo_size, spec.photo_thickness)?;

    let mut strokes = Vec::with_capacity(n);
    let mut t = 0;
    for &k in &draw_order {
        let verts: Vec<(f64, f64)> = primitives[k]
            .vertices()
            .into_iter()
            .map(|(x, y)| {
                if spec.jitter == 0.0 {
                    (x, y)
                } else {
                    let jx = spec.jitter * rng.normal();
                    let jy = spec.jitter * rng.normal();
                    (clamp(x + jx, spec.canvas), clamp(y + jy, spec.canvas))
                }
            })
            .collect();
        let len = verts.len() as u64;
        strokes.push(outline(verts, t));
        t += len * POINT_INTERVAL_MS + STROKE_GAP_MS;
    }
    let sketch = VectorSketch::new(id, user_id, strokes, spec.canvas, spec.canvas)?;
    Ok(SyntheticScene { seed, primitives, draw_order, photo, sketch })
}

/// `n` scenes with ids `s00000, s00001, ...` and users assigned round-robin.
/// Scene `i` draws from its own stream of `seed`, so a corpus is a prefix of
/// any larger corpus with the same seed.
pub fn generate_synthetic(seed: u64, n: usize, spec: &SynthSpec) -> Result<Vec<SyntheticScene>, SynthError> {
    spec.validate()?;
    (0..n)
        .map(|i| {
            let scene_seed = Rng::derive(seed, i as u64).next_u64();
            generate_scene(format!("s{i:05}"), format!("u{}", i % spec.n_users), scene_seed, spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec::default();
        assert_eq!(generate_synthetic(3, 10, &spec).unwrap(), generate_synthetic(3, 10, &spec).unwrap());
        assert_ne!(generate_synthetic(3, 10, &spec).unwrap(), generate_synthetic(4, 10, &spec).unwrap());
    }

    #[test]
    fn unique_ids_and_users() {
        let corpus = generate_synthetic(1, 100, &SynthSpec::default()).unwrap();
        let ids: BTreeSet<_> = corpus.iter().map(|s| s.sketch.sketch_id.clone()).collect();
        assert_eq!(ids.len(), 100);
        assert_eq!(corpus[7].sketch.user_id, "u2");
    }

    #[test]
    fn prefix_stable() {
        let spec = SynthSpec::default();
        let small = generate_synthetic(9, 5, &spec).unwrap();
        let big = generate_synthetic(9, 8, &spec).unwrap();
        assert_eq!(small[..], big[..5]);
    }

    #[test]
    fn jitter_zero_matches_photo() {
        let spec = SynthSpec { jitter: 0.0, photo_thickness: 2, ..SynthSpec::default() };
        for scene in generate_synthetic(5, 20, &spec).unwrap() {
            let r = geometry::rasterize(&scene.sketch, spec.photo_size, spec.photo_size, 2).unwrap();
            assert_eq!(r, scene.photo);
        }
    }

    #[test]
    fn strokes_within_limits() {
        let spec = SynthSpec::default();
        for scene in generate_synthetic(2, 50, &spec).unwrap() {
            let s = &scene.sketch;
            assert!((1..=4).contains(&s.stroke_count()));
            assert!(s.strokes.iter().all(|st| st.len() <= 9 && st.len() >= 3));
            assert!(s.strokes.iter().flat_map(|st| &st.points).all(|p| (0.0..=256.0).contains(&p.x) && (0.0..=256.0).contains(&p.y)));
            let mut order = scene.draw_order.clone();
            order.sort_unstable();
            assert_eq!(order, (0..scene.primitives.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bad_spec() {
        let spec = SynthSpec { min_primitives: 3, max_primitives: 2, ..SynthSpec::default() };
        assert!(generate_synthetic(0, 1, &spec).is_err());
    }
}
