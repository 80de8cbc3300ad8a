//! Subcommand implementations. Each returns the one-line JSON summary.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use scenesketch_core::analysis::{coarse_to_fine, MaskEnd, StrokeTime};
use scenesketch_core::geometry::{rasterize, simplify_sketch};
use scenesketch_core::hdecoder::{train_pretext, PretextItem, SampleMode, UnrollLimits};
use scenesketch_core::retrieval::{
    evaluate, masked_retrieval_eval, raster_for, split_corpus, train_retrieval, MaskedItem, RetrievalPair,
};
use scenesketch_core::sketch::{corpus_stats, encode_stroke5, normalize};
use scenesketch_core::synth::generate_synthetic;
use scenesketch_core::VectorSketch;

use crate::checkpoint::{Checkpoint, ModelSpec};
use crate::config::{RunConfig, Task};
use crate::csv_out::{self, num};
use crate::error::{Error, Result};
use crate::scenes::{self, check_file_id};
use crate::sketch_io::{self, Stroke5Record};
use crate::{fsio, pgm};

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::invalid(format!("no {what} given (flag or [paths] in the config)")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConvertTarget {
    /// NDJSON sketches to a stroke-5 file.
    Stroke5,
    /// Stroke-5 file to NDJSON sketches on a unit canvas.
    Ndjson,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "stroke5")]
    pub to: ConvertTarget,
}

pub fn convert(a: ConvertArgs) -> Result<Value> {
    fsio::ensure_distinct(&a.output, &[&a.input])?;
    let (n, points) = match a.to {
        ConvertTarget::Stroke5 => {
            let sketches = sketch_io::load_sketches(&a.input)?;
            let records = sketches
                .iter()
                .map(|s| Ok(Stroke5Record { id: s.sketch_id.clone(), sequence: encode_stroke5(s)? }))
                .collect::<Result<Vec<_>>>()?;
            sketch_io::save_stroke5(&a.output, &records)?;
            (records.len(), records.iter().map(|r| r.sequence.len()).sum::<usize>())
        }
        ConvertTarget::Ndjson => {
            let records = sketch_io::load_stroke5(&a.input)?;
            let sketches: Vec<VectorSketch> = records
                .iter()
                .map(|r| VectorSketch { sketch_id: r.id.clone(), ..r.sequence.decode() })
                .collect();
            sketch_io::save_sketches(&a.output, &sketches)?;
            (sketches.len(), sketches.iter().map(VectorSketch::point_count).sum())
        }
    };
    Ok(json!({"command": "convert", "sketches": n, "points": points, "output": a.output}))
}

#[derive(Debug, Args)]
pub struct SimplifyArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Tolerance in canvas-normalized units.
    #[arg(long, allow_negative_numbers = true, required_unless_present = "epsilon_px")]
    pub epsilon: Option<f64>,
    /// Tolerance in canvas pixels, divided by each sketch's longer canvas side.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "epsilon")]
    pub epsilon_px: Option<f64>,
}

pub fn simplify(a: SimplifyArgs) -> Result<Value> {
    let (value, flag) = match (a.epsilon, a.epsilon_px) {
        (Some(e), _) => (e, "--epsilon"),
        (None, Some(e)) => (e, "--epsilon-px"),
        (None, None) => unreachable!("clap requires one tolerance"),
    };
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::invalid(format!("{flag} must be finite and nonnegative, got {value}")));
    }
    fsio::ensure_distinct(&a.output, &[&a.input])?;
    let sketches = sketch_io::load_sketches(&a.input)?;
    let (mut before, mut after) = (0, 0);
    let mut out = Vec::with_capacity(sketches.len());
    for s in &sketches {
        let eps = if a.epsilon.is_some() { value } else { value / s.canvas_w.max(s.canvas_h) };
        let (simple, report) = simplify_sketch(s, eps)?;
        before += report.points_before;
        after += report.points_after;
        out.push(simple);
    }
    sketch_io::save_sketches(&a.output, &out)?;
    let mut summary = json!({
        "command": "simplify", "sketches": out.len(),
        "points_before": before, "points_after": after,
    });
    summary[if a.epsilon.is_some() { "epsilon" } else { "epsilon_px" }] = json!(value);
    Ok(summary)
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    pub input: PathBuf,
    /// Directory receiving one `ID.pgm` per sketch.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub thickness: usize,
}

pub fn rasterize_cmd(a: RasterizeArgs) -> Result<Value> {
    let sketches = sketch_io::load_sketches(&a.input)?;
    for s in &sketches {
        check_file_id(&s.sketch_id)?;
    }
    let rasters = sketches
        .iter()
        .map(|s| Ok(rasterize(&normalize(s)?, a.size, a.size, a.thickness)?))
        .collect::<Result<Vec<_>>>()?;
    fsio::create_dir_all(&a.output)?;
    let mut ink = 0;
    for (s, r) in sketches.iter().zip(&rasters) {
        ink += r.ink_count();
        pgm::save(&a.output.join(format!("{}.pgm", s.sketch_id)), r)?;
    }
    Ok(json!({"command": "rasterize", "files": rasters.len(), "size": a.size, "thickness": a.thickness, "ink_pixels": ink}))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimeArg {
    Ordinal,
    Timestamp,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub input: Option<PathBuf>,
    /// Write the coarse-to-fine curve as CSV.
    #[arg(long)]
    pub coarse_to_fine: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, value_enum, default_value = "ordinal")]
    pub time: TimeArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn stats(a: StatsArgs) -> Result<Value> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    cfg.expect_task(Task::Stats)?;
    let input = require(a.input.or(cfg.paths.input), "input")?;
    let sketches = sketch_io::load_sketches(&input)?;
    if sketches.is_empty() {
        return Err(Error::invalid(format!("{} holds no sketches", input.display())));
    }
    let c = corpus_stats(&sketches)?;
    let counts: Vec<usize> = sketches.iter().map(VectorSketch::stroke_count).collect();
    let mut summary = json!({
        "command": "stats",
        "n_sketches": c.n_sketches,
        "stroke_count": {
            "min": counts.iter().min(), "max": counts.iter().max(),
            "mean": c.mean_stroke_count, "median": c.median_stroke_count,
        },
        "total_points": c.total_points,
        "mean_points_per_stroke": c.mean_points_per_stroke,
    });
    if let Some(out) = a.coarse_to_fine {
        fsio::ensure_distinct(&out, &[&input])?;
        let time = match a.time {
            TimeArg::Ordinal => StrokeTime::Ordinal,
            TimeArg::Timestamp => StrokeTime::Timestamp,
        };
        let curve = coarse_to_fine(&sketches, a.bins, time)?;
        let rows: Vec<Vec<String>> =
            curve.bins.iter().map(|b| vec![num(b.lo), num(b.mean_length), b.n_strokes.to_string()]).collect();
        csv_out::write(&out, &["bin", "mean_length", "n_strokes"], &rows)?;
        summary["coarse_to_fine_bins"] = json!(curve.bins.len());
        summary["strictly_decreasing"] = json!(curve.is_strictly_decreasing());
    }
    Ok(summary)
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn gen_data(a: GenDataArgs) -> Result<Value> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(n) = a.n {
        cfg.data.n = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(j) = a.jitter {
        cfg.data.jitter = j;
    }
    if cfg.data.n == 0 {
        return Err(Error::invalid("--n must be at least 1"));
    }
    let scenes = generate_synthetic(cfg.seed, cfg.data.n, &cfg.data.to_core())?;
    scenes::write_dataset(&a.output, &scenes)?;
    let strokes: usize = scenes.iter().map(|s| s.sketch.stroke_count()).sum();
    Ok(json!({
        "command": "gen-data", "scenes": scenes.len(), "strokes": strokes,
        "users": cfg.data.n_users.min(scenes.len()), "seed": cfg.seed, "output": a.output,
    }))
}

/// Optimizer flags shared by both training commands.
#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainPretextArgs {
    /// NDJSON sketches.
    pub input: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

pub fn train_pretext_cmd(a: TrainPretextArgs) -> Result<Value> {
    let mut cfg = RunConfig::load_or_default(a.train.config.as_deref())?;
    cfg.expect_task(Task::Pretext)?;
    let t = &a.train;
    if let Some(v) = t.epochs {
        cfg.pretext.epochs = v;
    }
    if let Some(v) = t.lr {
        cfg.pretext.lr = v;
    }
    if let Some(v) = t.batch_size {
        cfg.pretext.batch_size = v;
    }
    if let Some(v) = t.seed {
        cfg.seed = v;
    }
    if !(cfg.pretext.lr.is_finite() && cfg.pretext.lr >= 0.0) {
        return Err(Error::invalid("learning rate must be finite and nonnegative"));
    }
    let input = require(a.input.or(cfg.paths.input.clone()), "input")?;
    fsio::ensure_distinct(&a.output, &[&input])?;
    let sketches = sketch_io::load_sketches(&input)?;
    let out = train_pretext(&sketches, &cfg.pretext_config())?;
    let ck = Checkpoint::new(
        ModelSpec::Pretext { encoder: cfg.encoder.clone(), decoder: cfg.decoder, thickness: cfg.pretext.thickness },
        &out.model.params,
    );
    ck.save(&a.output)?;
    if let Some(path) = &t.loss_csv {
        let rows: Vec<Vec<String>> =
            out.curve.iter().map(|e| vec![e.epoch.to_string(), num(e.total), num(e.mse), num(e.ce)]).collect();
        csv_out::write(path, &["epoch", "total", "mse", "ce"], &rows)?;
    }
    let (first, last) = (out.curve[0], *out.curve.last().expect("curve has the initial entry"));
    Ok(json!({
        "command": "train-pretext", "sketches": sketches.len(), "epochs": cfg.pretext.epochs,
        "parameters": out.model.params.num_scalars(),
        "initial_loss": first.total, "final_loss": last.total, "output": a.output,
    }))
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// NDJSON sketches whose rasters condition the decoder.
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Stroke-5 file to write.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub max_strokes: usize,
    #[arg(long, default_value_t = 16)]
    pub max_points: usize,
    /// Sample pen states at this temperature instead of taking the argmax.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn sample(a: SampleArgs) -> Result<Value> {
    fsio::ensure_distinct(&a.output, &[&a.input, &a.checkpoint])?;
    let (model, thickness) = Checkpoint::load(&a.checkpoint)?.pretext_model()?;
    let limits = UnrollLimits::new(a.max_strokes, a.max_points)?;
    let sketches = sketch_io::load_sketches(&a.input)?;
    let size = model.encoder.config().input_size;
    let mut records = Vec::with_capacity(sketches.len());
    let (mut clamped, mut strokes, mut matched) = (0, 0, 0);
    for (i, s) in sketches.iter().enumerate() {
        let item = PretextItem::from_sketch(s, size, thickness)?;
        let mode = match a.temperature {
            None => SampleMode::Greedy,
            Some(temperature) => SampleMode::Stochastic { seed: a.seed.wrapping_add(i as u64), temperature },
        };
        let out = model.sample(&item.raster, limits, mode)?;
        clamped += out.clamped;
        strokes += out.sequence.stroke_count();
        matched += usize::from(out.sequence.stroke_count() == s.stroke_count());
        records.push(Stroke5Record { id: s.sketch_id.clone(), sequence: out.sequence });
    }
    sketch_io::save_stroke5(&a.output, &records)?;
    Ok(json!({
        "command": "sample", "samples": records.len(), "strokes": strokes,
        "stroke_count_matches": matched, "clamped_coordinates": clamped, "output": a.output,
    }))
}

#[derive(Debug, Args)]
pub struct SplitFlags {
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Seed for the user split; defaults to the run seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

fn pairs_for(
    model: &scenesketch_core::retrieval::EmbeddingModel,
    data: &[(VectorSketch, scenesketch_core::RasterSketch)],
    idx: &[usize],
    thickness: usize,
) -> Result<Vec<RetrievalPair>> {
    let n = model.input_size();
    idx.iter()
        .map(|&i| {
            let (s, photo) = &data[i];
            if photo.width != n || photo.height != n {
                return Err(Error::invalid(format!(
                    "photo for {} is {}x{}, model expects {n}x{n}",
                    s.sketch_id, photo.width, photo.height
                )));
            }
            Ok(RetrievalPair { id: s.sketch_id.clone(), sketch: raster_for(model, s, thickness)?, photo: photo.clone() })
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct TrainRetrievalArgs {
    /// Dataset directory from `gen-data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Pretext checkpoint whose encoder initializes the backbone.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub split: SplitFlags,
}

pub fn train_retrieval_cmd(a: TrainRetrievalArgs) -> Result<Value> {
    let mut cfg = RunConfig::load_or_default(a.train.config.as_deref())?;
    cfg.expect_task(Task::Retrieval)?;
    let t = &a.train;
    if let Some(v) = t.epochs {
        cfg.retrieval.epochs = v;
    }
    if let Some(v) = t.lr {
        cfg.retrieval.lr = v;
    }
    if let Some(v) = t.batch_size {
        cfg.retrieval.batch_size = v;
    }
    if let Some(v) = t.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.split.train_fraction {
        cfg.retrieval.train_fraction = v;
    }
    if !(cfg.retrieval.lr.is_finite() && cfg.retrieval.lr >= 0.0) {
        return Err(Error::invalid("learning rate must be finite and nonnegative"));
    }
    let split_seed = a.split.split_seed.unwrap_or(cfg.seed);
    let dir = require(a.data.or(cfg.paths.data.clone()), "data directory")?;
    let warm = a.warm_start.or(cfg.paths.warm_start.clone());
    let data = scenes::load_pairs(&dir)?;
    let sketches: Vec<VectorSketch> = data.iter().map(|d| d.0.clone()).collect();
    let split = split_corpus(&sketches, cfg.retrieval.train_fraction, split_seed)?;
    let rc = cfg.retrieval_config();
    let probe = scenesketch_core::retrieval::EmbeddingModel::new(rc.model.clone(), 0)?;
    let train = pairs_for(&probe, &data, &split.train, cfg.retrieval.thickness)?;
    let warm_params = match &warm {
        Some(p) => Some(Checkpoint::load(p)?.params()?),
        None => None,
    };
    let out = train_retrieval(&train, &rc, warm_params.as_ref())?;
    if warm.is_some() && out.warm_started == 0 {
        return Err(Error::invalid("warm-start checkpoint shares no encoder tensors with the model"));
    }
    let ck = Checkpoint::new(
        ModelSpec::Retrieval {
            encoder: cfg.encoder.clone(),
            embed_dim: cfg.retrieval.embed_dim,
            normalize: cfg.retrieval.normalize,
            distance: cfg.retrieval.distance,
            thickness: cfg.retrieval.thickness,
            train_fraction: cfg.retrieval.train_fraction,
            split_seed,
        },
        &out.model.params,
    );
    ck.save(&a.output)?;
    if let Some(path) = &t.loss_csv {
        let rows: Vec<Vec<String>> =
            out.losses.iter().enumerate().map(|(e, l)| vec![(e + 1).to_string(), num(*l)]).collect();
        csv_out::write(path, &["epoch", "triplet"], &rows)?;
    }
    Ok(json!({
        "command": "train-retrieval", "train_pairs": split.train.len(), "test_pairs": split.test.len(),
        "epochs": cfg.retrieval.epochs, "final_loss": out.losses.last(),
        "warm_started_tensors": out.warm_started, "split_warnings": split.warnings, "output": a.output,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSet {
    /// Held-out users' share of the split stored in the checkpoint.
    Test,
    /// Every pair in the dataset.
    All,
}

struct EvalContext {
    model: scenesketch_core::retrieval::EmbeddingModel,
    distance: scenesketch_core::retrieval::Distance,
    thickness: usize,
    data: Vec<(VectorSketch, scenesketch_core::RasterSketch)>,
    idx: Vec<usize>,
}

fn eval_context(checkpoint: &Path, dir: &Path, set: EvalSet) -> Result<EvalContext> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.embedding_model()?;
    let ModelSpec::Retrieval { distance, thickness, train_fraction, split_seed, .. } = ck.model else {
        unreachable!("embedding_model checked the kind")
    };
    let data = scenes::load_pairs(dir)?;
    let idx = match set {
        EvalSet::All => (0..data.len()).collect(),
        EvalSet::Test => {
            let sketches: Vec<VectorSketch> = data.iter().map(|d| d.0.clone()).collect();
            split_corpus(&sketches, train_fraction, split_seed)?.test
        }
    };
    if idx.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    Ok(EvalContext { model, distance: distance.to_core(), thickness, data, idx })
}

#[derive(Debug, Args)]
pub struct EvalRetrievalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// JSON metrics file.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-query ranking CSV.
    #[arg(long)]
    pub rankings: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub set: EvalSet,
}

pub fn eval_retrieval(a: EvalRetrievalArgs) -> Result<Value> {
    let ctx = eval_context(&a.checkpoint, &a.data, a.set)?;
    let pairs = pairs_for(&ctx.model, &ctx.data, &ctx.idx, ctx.thickness)?;
    let r = evaluate(&ctx.model, &pairs, ctx.distance)?;
    let metrics = json!({
        "format_version": 1, "r_at_1": r.r_at_1, "r_at_10": r.r_at_10,
        "n_queries": pairs.len(), "gallery_size": pairs.len(),
    });
    let mut text = serde_json::to_string(&metrics).expect("metrics serialize");
    text.push('\n');
    fsio::write_atomic(&a.output, text.as_bytes())?;
    if let Some(path) = &a.rankings {
        let rows: Vec<Vec<String>> = r
            .rankings
            .iter()
            .map(|q| {
                let pos = q.ranked.iter().position(|id| *id == q.query_id).expect("truth is in the gallery");
                vec![q.query_id.clone(), (pos + 1).to_string(), q.ranked.iter().take(10).cloned().collect::<Vec<_>>().join(" ")]
            })
            .collect();
        csv_out::write(path, &["query_id", "truth_rank", "top10"], &rows)?;
    }
    let mut summary = metrics;
    summary["command"] = json!("eval-retrieval");
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EndArg {
    Early,
    Late,
}

#[derive(Debug, Args)]
pub struct MaskEvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// CSV of R@K per mask setting.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", allow_negative_numbers = true)]
    pub fractions: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "early,late")]
    pub ends: Vec<EndArg>,
    #[arg(long, value_enum, default_value = "test")]
    pub set: EvalSet,
}

pub fn mask_eval(a: MaskEvalArgs) -> Result<Value> {
    if let Some(f) = a.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::invalid(format!("mask fraction must lie in [0, 1], got {f}")));
    }
    let ctx = eval_context(&a.checkpoint, &a.data, a.set)?;
    let items: Vec<MaskedItem> =
        ctx.idx.iter().map(|&i| MaskedItem { sketch: ctx.data[i].0.clone(), photo: ctx.data[i].1.clone() }).collect();
    let mut spec = Vec::new();
    for e in &a.ends {
        let end = match e {
            EndArg::Early => MaskEnd::Early,
            EndArg::Late => MaskEnd::Late,
        };
        spec.extend(a.fractions.iter().map(|&f| (f, end)));
    }
    let points = masked_retrieval_eval(&ctx.model, &items, &spec, ctx.thickness, ctx.distance)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let end = if p.end == MaskEnd::Early { "early" } else { "late" };
            vec![num(p.fraction), end.to_string(), num(p.r_at_1), num(p.r_at_10)]
        })
        .collect();
    csv_out::write(&a.output, &["fraction", "end", "r_at_1", "r_at_10"], &rows)?;
    Ok(json!({
        "command": "mask-eval", "settings": points.len(), "n_queries": items.len(),
        "chance_r_at_10": scenesketch_core::retrieval::chance_recall(10, items.len()), "output": a.output,
    }))
}
