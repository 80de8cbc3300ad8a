//! Sketch-to-photo retrieval with a shared encoder and a triplet objective.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::analysis::{self, AnalysisError, MaskEnd};
use crate::encoder::{ConvEncoder, EncoderConfig, EncoderError};
use crate::geometry::{self, GeometryError, RasterSketch};
use crate::math;
use crate::nn::Linear;
use crate::rng::Rng;
use crate::sketch::{normalize, SketchError, VectorSketch};
use crate::tensor::{clip_global_norm, Binding, Optimizer, ParamStore, Tape, TensorError, Var};

pub const DEFAULT_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("duplicate gallery id {0:?}")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("no ground truth for query {0:?}")]
    MissingGroundTruth(String),
    #[error("sketch {0} has no user id")]
    MissingUser(usize),
    #[error("train fraction must lie in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("batch size must be at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("need at least 2 training pairs, got {0}")]
    TooFewPairs(usize),
    #[error("warm start tensor {name:?} has shape {got:?}, model expects {expected:?}")]
    WarmStartShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid retrieval configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distance {
    /// Squared Euclidean distance on the raw embeddings.
    #[default]
    SqEuclidean,
    /// `1 - cos`, i.e. half the squared distance of unit-normalized vectors.
    Cosine,
}

fn check_len(a: &[f64], b: &[f64]) -> Result<(), RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
        match self {
            Distance::SqEuclidean => squared_euclidean(a, b),
            Distance::Cosine => {
                check_len(a, b)?;
                let (na, nb) = (norm(a).max(1e-12), norm(b).max(1e-12));
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                Ok(1.0 - dot / (na * nb))
            }
        }
    }

    fn on_tape(self, tape: &mut Tape, a: Var, b: Var) -> Result<Var, TensorError> {
        match self {
            Distance::SqEuclidean => tape.squared_distance(a, b),
            Distance::Cosine => {
                let na = tape.l2_normalize(a)?;
                let nb = tape.l2_normalize(b)?;
                let d = tape.squared_distance(na, nb)?;
                tape.scale(d, 0.5)
            }
        }
    }
}

/// `max(0, d(a, p) - d(a, n) + margin)` with squared Euclidean `d`.
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<f64, RetrievalError> {
    let dp = squared_euclidean(anchor, positive)?;
    let dn = squared_euclidean(anchor, negative)?;
    Ok((dp - dn + margin).max(0.0))
}

fn triplet_on_tape(tape: &mut Tape, distance: Distance, a: Var, p: Var, n: Var, margin: f64) -> Result<Var, TensorError> {
    let dp = distance.on_tape(tape, a, p)?;
    let dn = distance.on_tape(tape, a, n)?;
    let diff = tape.sub(dp, dn)?;
    let shifted = tape.add_scalar(diff, margin)?;
    tape.relu(shifted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConfig {
    pub encoder: EncoderConfig,
    pub embed_dim: usize,
    /// Unit-normalize embeddings.
    pub normalize: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig { encoder: EncoderConfig::default(), embed_dim: 64, normalize: false }
    }
}

/// Shared encoder for sketches and photos followed by an affine projection.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub config: EmbeddingConfig,
    pub encoder: ConvEncoder,
    pub projection: Linear,
    pub params: ParamStore,
}

impl EmbeddingModel {
    pub fn new(config: EmbeddingConfig, seed: u64) -> Result<Self, RetrievalError> {
        if config.embed_dim == 0 {
            return Err(RetrievalError::Config("embedding width must be positive"));
        }
        let mut rng = Rng::derive(seed, 0x5e7);
        let mut params = ParamStore::new();
        let encoder = ConvEncoder::new(config.encoder.clone(), &mut params, "encoder", &mut rng)?;
        let projection = Linear::new(&mut params, "embed", config.encoder.latent_dim, config.embed_dim, &mut rng);
        Ok(EmbeddingModel { config, encoder, projection, params })
    }

    pub fn from_params(config: EmbeddingConfig, params: ParamStore) -> Result<Self, RetrievalError> {
        let mut model = Self::new(config, 0)?;
        let fits = params.len() == model.params.len()
            && model.params.iter().zip(params.iter()).all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape());
        if !fits {
            return Err(RetrievalError::Config("parameter names or shapes do not match the architecture"));
        }
        model.params = params;
        Ok(model)
    }

    /// Copies every `encoder.*` tensor present in `source` into the model.
    /// Returns how many tensors were copied.
    pub fn warm_start(&mut self, source: &ParamStore) -> Result<usize, RetrievalError> {
        let mut copied = 0;
        for (name, tensor) in source.iter().filter(|(n, _)| n.starts_with("encoder.")) {
            let Some(id) = self.params.find(name) else { continue };
            let dst = self.params.get_mut(id);
            if dst.shape() != tensor.shape() {
                return Err(RetrievalError::WarmStartShape {
                    name: String::from(name),
                    expected: dst.shape().to_vec(),
                    got: tensor.shape().to_vec(),
                });
            }
            *dst = tensor.clone();
            copied += 1;
        }
        Ok(copied)
    }

    pub fn embed_var(&self, tape: &mut Tape, params: &Binding, raster: &RasterSketch) -> Result<Var, RetrievalError> {
        let l = self.encoder.forward_raster(tape, params, raster)?;
        let e = self.projection.forward(tape, params, l)?;
        Ok(if self.config.normalize { tape.l2_normalize(e)? } else { e })
    }

    /// Embedding of one raster; depends only on the raster and the weights.
    pub fn embed(&self, raster: &RasterSketch) -> Result<Vec<f64>, RetrievalError> {
        let mut tape = Tape::new();
        let b = self.params.bind_frozen(&mut tape);
        let e = self.embed_var(&mut tape, &b, raster)?;
        Ok(tape.value(e).data().to_vec())
    }

    pub fn input_size(&self) -> usize {
        self.config.encoder.input_size
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gallery {
    ids: Vec<String>,
    embeddings: Vec<Vec<f64>>,
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, embedding: Vec<f64>) -> Result<(), RetrievalError> {
        let id = id.into();
        if let Some(first) = self.embeddings.first() {
            check_len(first, &embedding)?;
        }
        if self.ids.contains(&id) {
            return Err(RetrievalError::DuplicateId(id));
        }
        self.ids.push(id);
        self.embeddings.push(embedding);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i]
    }
}

/// Gallery positions ordered by ascending distance to `query`; equal
/// distances keep insertion order.
pub fn rank_indices(query: &[f64], gallery: &Gallery, distance: Distance) -> Result<Vec<usize>, RetrievalError> {
    if gallery.is_empty() {
        return Err(RetrievalError::EmptyGallery);
    }
    let d = gallery.embeddings.iter().map(|e| distance.eval(query, e)).collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok(order)
}

pub fn rank(query: &[f64], gallery: &Gallery, distance: Distance) -> Result<Vec<String>, RetrievalError> {
    Ok(rank_indices(query, gallery, distance)?.into_iter().map(|i| gallery.ids[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRanking {
    pub query_id: String,
    pub ranked: Vec<String>,
}

/// Percentage of queries whose ground-truth item is among the first `k`.
pub fn recall_at_k(results: &[QueryRanking], ground_truth: &BTreeMap<String, String>, k: usize) -> Result<f64, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if results.is_empty() {
        return Err(RetrievalError::NoQueries);
    }
    let mut hits = 0usize;
    for r in results {
        let truth = ground_truth.get(&r.query_id).ok_or_else(|| RetrievalError::MissingGroundTruth(r.query_id.clone()))?;
        if r.ranked.iter().take(k).any(|id| id == truth) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub rankings: Vec<QueryRanking>,
    pub r_at_1: f64,
    pub r_at_10: f64,
}

/// A sketch raster and the photo it depicts. The photo's gallery id is `id`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalPair {
    pub id: String,
    pub sketch: RasterSketch,
    pub photo: RasterSketch,
}

/// Ranks every photo for every sketch; the gallery is exactly the photos
/// of `pairs` and each sketch's ground truth is its own pair.
pub fn evaluate(model: &EmbeddingModel, pairs: &[RetrievalPair], distance: Distance) -> Result<RetrievalResult, RetrievalError> {
    let queries = pairs.iter().map(|p| model.embed(&p.sketch)).collect::<Result<Vec<_>, _>>()?;
    evaluate_embedded(model, pairs, &queries, distance)
}

fn evaluate_embedded(
    model: &EmbeddingModel,
    pairs: &[RetrievalPair],
    queries: &[Vec<f64>],
    distance: Distance,
) -> Result<RetrievalResult, RetrievalError> {
    let mut gallery = Gallery::new();
    for p in pairs {
        gallery.push(p.id.clone(), model.embed(&p.photo)?)?;
    }
    let mut truth = BTreeMap::new();
    let mut rankings = Vec::with_capacity(pairs.len());
    for (p, q) in pairs.iter().zip(queries) {
        truth.insert(p.id.clone(), p.id.clone());
        rankings.push(QueryRanking { query_id: p.id.clone(), ranked: rank(q, &gallery, distance)? });
    }
    let r_at_1 = recall_at_k(&rankings, &truth, 1)?;
    let r_at_10 = recall_at_k(&rankings, &truth, 10)?;
    Ok(RetrievalResult { rankings, r_at_1, r_at_10 })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    /// Corpus indices, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Per-user stratified split. Each user's sketches are shuffled with the
/// seed and the first `floor(fraction * n)` go to training. Users are
/// visited in id order so the result does not depend on corpus order
/// beyond the indices themselves.
pub fn split_by_user(users: &[&str], train_fraction: f64, seed: u64) -> Result<Split, RetrievalError> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(RetrievalError::InvalidFraction(train_fraction));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, u) in users.iter().enumerate() {
        if u.is_empty() {
            return Err(RetrievalError::MissingUser(i));
        }
        groups.entry(u).or_default().push(i);
    }
    let mut rng = Rng::derive(seed, 0x5917);
    let mut split = Split::default();
    for (user, mut idx) in groups {
        if idx.len() < 2 {
            split.warnings.push(format!("user {user:?} has {} sketch; all sent to train", idx.len()));
            split.train.extend(idx);
            continue;
        }
        rng.shuffle(&mut idx);
        // The small bias keeps 0.7 * 10 from flooring to 6.
        let n_train = (math::floor(train_fraction * idx.len() as f64 + 1e-9) as usize).min(idx.len());
        split.train.extend_from_slice(&idx[..n_train]);
        split.test.extend_from_slice(&idx[n_train..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

pub fn split_corpus(corpus: &[VectorSketch], train_fraction: f64, seed: u64) -> Result<Split, RetrievalError> {
    let users: Vec<&str> = corpus.iter().map(|s| s.user_id.as_str()).collect();
    split_by_user(&users, train_fraction, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub model: EmbeddingConfig,
    pub distance: Distance,
    pub margin: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            model: EmbeddingConfig::default(),
            distance: Distance::SqEuclidean,
            margin: DEFAULT_MARGIN,
            lr: 1e-3,
            batch_size: 8,
            epochs: 10,
            seed: 0,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub model: EmbeddingModel,
    /// Mean batch loss of each epoch, in training order.
    pub losses: Vec<f64>,
    pub warm_started: usize,
}

/// Mean triplet loss of one batch: every other photo in the batch is a
/// negative for each sketch.
pub fn batch_loss(
    model: &EmbeddingModel,
    tape: &mut Tape,
    params: &Binding,
    batch: &[&RetrievalPair],
    distance: Distance,
    margin: f64,
) -> Result<Var, RetrievalError> {
    if batch.len() < 2 {
        return Err(RetrievalError::BatchTooSmall(batch.len()));
    }
    let sketches = batch.iter().map(|p| model.embed_var(tape, params, &p.sketch)).collect::<Result<Vec<_>, _>>()?;
    let photos = batch.iter().map(|p| model.embed_var(tape, params, &p.photo)).collect::<Result<Vec<_>, _>>()?;
    let mut sum: Option<Var> = None;
    for (i, &a) in sketches.iter().enumerate() {
        for (j, &n) in photos.iter().enumerate() {
            if i == j {
                continue;
            }
            let l = triplet_on_tape(tape, distance, a, photos[i], n, margin)?;
            sum = Some(match sum {
                None => l,
                Some(s) => tape.add(s, l)?,
            });
        }
    }
    let b = batch.len() as f64;
    Ok(tape.scale(sum.expect("batch has at least two pairs"), 1.0 / (b * (b - 1.0)))?)
}

/// Triplet training. Each epoch reshuffles the pairs from `seed`; a
/// trailing batch of one pair has no negative and is folded into the
/// previous batch.
pub fn train_retrieval(
    pairs: &[RetrievalPair],
    config: &RetrievalConfig,
    warm_start: Option<&ParamStore>,
) -> Result<RetrievalOutcome, RetrievalError> {
    if config.batch_size < 2 {
        return Err(RetrievalError::BatchTooSmall(config.batch_size));
    }
    if pairs.len() < 2 {
        return Err(RetrievalError::TooFewPairs(pairs.len()));
    }
    if !(config.margin.is_finite() && config.margin >= 0.0) {
        return Err(RetrievalError::Config("margin must be finite and nonnegative"));
    }
    let mut model = EmbeddingModel::new(config.model.clone(), config.seed)?;
    let warm_started = match warm_start {
        Some(src) => model.warm_start(src)?,
        None => 0,
    };
    let mut opt = Optimizer::adam(config.lr, &model.params);
    let mut rng = Rng::derive(config.seed, 0x7a1);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        if batches.len() > 1 && batches[batches.len() - 1].len() == 1 {
            batches.pop();
            let start = order.len() - config.batch_size - 1;
            let last = batches.len() - 1;
            batches[last] = &order[start..];
        }
        let mut epoch_loss = 0.0;
        for batch in &batches {
            let items: Vec<&RetrievalPair> = batch.iter().map(|&i| &pairs[i]).collect();
            let mut tape = Tape::new();
            let b = model.params.bind(&mut tape);
            let loss = batch_loss(&model, &mut tape, &b, &items, config.distance, config.margin)?;
            epoch_loss += tape.value(loss).data()[0];
            let grads = tape.backward(loss)?;
            let mut g = model.params.collect_grads(&b, &grads);
            if let Some(max) = config.clip_norm {
                clip_global_norm(&mut g, max);
            }
            opt.step(&mut model.params, &g)?;
        }
        losses.push(epoch_loss / batches.len() as f64);
    }
    Ok(RetrievalOutcome { model, losses, warm_started })
}

/// A test item for masked evaluation: the vector sketch and its photo.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedItem {
    pub sketch: VectorSketch,
    pub photo: RasterSketch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskPoint {
    pub fraction: f64,
    pub end: MaskEnd,
    pub r_at_1: f64,
    pub r_at_10: f64,
}

fn sketch_raster(sketch: &VectorSketch, size: usize, thickness: usize) -> Result<RasterSketch, RetrievalError> {
    let n = if sketch.strokes.is_empty() { sketch.clone() } else { normalize(sketch)? };
    Ok(geometry::rasterize(&n, size, size, thickness)?)
}

/// Re-runs retrieval with strokes removed from the chosen end before
/// rasterization, once per `(fraction, end)`. The photo gallery is shared.
pub fn masked_retrieval_eval(
    model: &EmbeddingModel,
    items: &[MaskedItem],
    spec: &[(f64, MaskEnd)],
    thickness: usize,
    distance: Distance,
) -> Result<Vec<MaskPoint>, RetrievalError> {
    if items.is_empty() {
        return Err(RetrievalError::NoQueries);
    }
    let size = model.input_size();
    let mut out = Vec::with_capacity(spec.len());
    for &(fraction, end) in spec {
        analysis::masked_count(1, fraction)?;
        let mut pairs = Vec::with_capacity(items.len());
        for it in items {
            let masked = analysis::mask_strokes(&it.sketch, fraction, end)?;
            pairs.push(RetrievalPair {
                id: it.sketch.sketch_id.clone(),
                sketch: sketch_raster(&masked, size, thickness)?,
                photo: it.photo.clone(),
            });
        }
        let r = evaluate(model, &pairs, distance)?;
        out.push(MaskPoint { fraction, end, r_at_1: r.r_at_1, r_at_10: r.r_at_10 });
    }
    Ok(out)
}

/// Expected R@k when every query gets the same ranking over a gallery of
/// `n` distinct ground truths.
pub fn chance_recall(k: usize, n: usize) -> f64 {
    100.0 * k.min(n) as f64 / n as f64
}

/// Rasterizes a vector sketch for the embedding model.
pub fn raster_for(model: &EmbeddingModel, sketch: &VectorSketch, thickness: usize) -> Result<RasterSketch, RetrievalError> {
    sketch_raster(sketch, model.input_size(), thickness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ConvSpec;
    use alloc::vec;

    fn small_config() -> EmbeddingConfig {
        EmbeddingConfig {
            encoder: EncoderConfig { input_size: 16, layers: vec![ConvSpec::new(4, 3, 2, 1), ConvSpec::new(8, 3, 2, 1)], latent_dim: 8 },
            embed_dim: 6,
            normalize: false,
        }
    }

    #[test]
    fn triplet_cases() {
        let a = [0.0, 0.0];
        assert_eq!(triplet_loss(&a, &a, &[1.0, 0.0], 0.2).unwrap(), 0.0);
        assert!((triplet_loss(&a, &[3.0, 0.0], &a, 0.2).unwrap() - 9.2).abs() < 1e-12);
        assert_eq!(triplet_loss(&a, &[1.0], &a, 0.2).unwrap_err(), RetrievalError::LengthMismatch(2, 1));
    }

    #[test]
    fn rank_orders_and_breaks_ties() {
        let mut g = Gallery::new();
        g.push("a", vec![2.0]).unwrap();
        g.push("b", vec![1.0]).unwrap();
        g.push("c", vec![3.0]).unwrap();
        g.push("d", vec![-1.0]).unwrap();
        assert_eq!(rank(&[0.0], &g, Distance::SqEuclidean).unwrap(), ["b", "d", "a", "c"]);
        assert!(matches!(g.push("a", vec![0.0]), Err(RetrievalError::DuplicateId(_))));
        assert!(matches!(g.push("e", vec![0.0, 1.0]), Err(RetrievalError::LengthMismatch(1, 2))));
        assert_eq!(rank(&[0.0], &Gallery::new(), Distance::SqEuclidean).unwrap_err(), RetrievalError::EmptyGallery);
    }

    #[test]
    fn cosine_distance() {
        assert!(Distance::Cosine.eval(&[1.0, 0.0], &[5.0, 0.0]).unwrap().abs() < 1e-15);
        assert!((Distance::Cosine.eval(&[1.0, 0.0], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn recall_cases() {
        let mut truth = BTreeMap::new();
        truth.insert(String::from("q1"), String::from("a"));
        truth.insert(String::from("q2"), String::from("b"));
        let results = vec![
            QueryRanking { query_id: "q1".into(), ranked: vec!["a".into(), "b".into(), "c".into()] },
            QueryRanking { query_id: "q2".into(), ranked: vec!["a".into(), "c".into(), "b".into()] },
        ];
        assert_eq!(recall_at_k(&results, &truth, 1).unwrap(), 50.0);
        assert_eq!(recall_at_k(&results, &truth, 2).unwrap(), 50.0);
        assert_eq!(recall_at_k(&results, &truth, 3).unwrap(), 100.0);
        assert_eq!(recall_at_k(&results, &truth, 0).unwrap_err(), RetrievalError::InvalidK);
        truth.remove("q2");
        assert!(matches!(recall_at_k(&results, &truth, 1), Err(RetrievalError::MissingGroundTruth(_))));
    }

    #[test]
    fn split_seventy_thirty() {
        let users = vec!["u"; 10];
        let s = split_by_user(&users, 0.7, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (7, 3));
        let s = split_by_user(&users, 1.0, 1).unwrap();
        assert!(s.test.is_empty());
        let s = split_by_user(&["a", "b", "b"], 0.5, 0).unwrap();
        assert_eq!(s.warnings.len(), 1);
        assert!(s.train.contains(&0));
        assert_eq!(s.train.len() + s.test.len(), 3);
        assert_eq!(split_by_user(&["a", ""], 0.5, 0).unwrap_err(), RetrievalError::MissingUser(1));
        assert!(split_by_user(&users, 1.5, 0).is_err());
    }

    #[test]
    fn embedding_normalized_when_asked() {
        let cfg = EmbeddingConfig { normalize: true, ..small_config() };
        let m = EmbeddingModel::new(cfg, 3).unwrap();
        let mut r = RasterSketch::blank(16, 16);
        r.pixels[40] = 1.0;
        let e = m.embed(&r).unwrap();
        assert_eq!(e.len(), 6);
        assert!((norm(&e) - 1.0).abs() < 1e-9);
    }

    fn toy_pairs(n: usize) -> Vec<RetrievalPair> {
        (0..n)
            .map(|i| {
                let mut r = RasterSketch::blank(16, 16);
                for k in 0..4 {
                    r.pixels[(i * 7 + k * 16 + 3) % 256] = 1.0;
                }
                RetrievalPair { id: format!("p{i}"), sketch: r.clone(), photo: r }
            })
            .collect()
    }

    #[test]
    fn zero_lr_keeps_params() {
        let cfg = RetrievalConfig { model: small_config(), lr: 0.0, epochs: 2, batch_size: 3, ..RetrievalConfig::default() };
        let out = train_retrieval(&toy_pairs(7), &cfg, None).unwrap();
        assert_eq!(out.model.params, EmbeddingModel::new(small_config(), 0).unwrap().params);
        assert_eq!(out.losses.len(), 2);
    }

    #[test]
    fn training_errors() {
        let cfg = RetrievalConfig { model: small_config(), batch_size: 1, ..RetrievalConfig::default() };
        assert_eq!(train_retrieval(&toy_pairs(4), &cfg, None).unwrap_err(), RetrievalError::BatchTooSmall(1));
        let cfg = RetrievalConfig { model: small_config(), ..RetrievalConfig::default() };
        assert_eq!(train_retrieval(&toy_pairs(1), &cfg, None).unwrap_err(), RetrievalError::TooFewPairs(1));
    }

    #[test]
    fn identical_pairs_perfect_recall_and_loss_falls() {
        let pairs = toy_pairs(8);
        let cfg = RetrievalConfig { model: small_config(), lr: 1e-2, epochs: 15, batch_size: 4, ..RetrievalConfig::default() };
        let out = train_retrieval(&pairs, &cfg, None).unwrap();
        // Identical sketch and photo put the truth at distance 0.
        let r = evaluate(&out.model, &pairs, Distance::SqEuclidean).unwrap();
        assert_eq!(r.r_at_1, 100.0);
        assert!(out.losses.last().unwrap() < &out.losses[0]);
    }

    #[test]
    fn warm_start_copies_encoder() {
        let mut src = EmbeddingModel::new(small_config(), 9).unwrap();
        for id in src.params.ids().collect::<Vec<_>>() {
            src.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.5);
        }
        let mut dst = EmbeddingModel::new(small_config(), 1).unwrap();
        let n = dst.warm_start(&src.params).unwrap();
        assert_eq!(n, 4);
        let id = dst.params.find("encoder.conv0.weight").unwrap();
        assert!(dst.params.get(id).data().iter().all(|&v| v == 0.5));
        let id = dst.params.find("embed.weight").unwrap();
        assert!(dst.params.get(id).data().iter().any(|&v| v != 0.5));
    }

    #[test]
    fn chance_level() {
        assert_eq!(chance_recall(10, 60), 100.0 * 10.0 / 60.0);
        assert_eq!(chance_recall(10, 4), 100.0);
    }
}
