//! Hierarchical raster-to-vector decoder.
//!
//! Two LSTMs cooperate. The global one runs once per stroke on
//! `[l_R, S_{i-1}]` and emits a stroke embedding `S_i`; its hidden state
//! starts from an affine map of the latent `l_R`. For each `S_i` the local
//! one is re-initialized from an affine map of `S_i` and runs once per
//! point on `[S_i, P_{t-1}]`, reading out `(x, y)` plus three pen logits.
//! Cell states start at zero at both levels and `S_0` is the zero vector.
//!
//! `P_{t-1}` is the previous point of the whole sequence, so the first point
//! of stroke `i + 1` is conditioned on the pen-up point that closed stroke
//! `i`. The very first point is conditioned on [`start_token`].

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::encoder::{ConvEncoder, EncoderConfig, EncoderError};
use crate::geometry::{self, GeometryError, RasterSketch};
use crate::nn::{Linear, LstmCell, LstmState};
use crate::rng::Rng;
use crate::sketch::{self, start_token, PenState, Point5, SketchError, Stroke5Sequence, VectorSketch};
use crate::tensor::{clip_global_norm, Binding, Optimizer, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecoderError {
    #[error("latent has length {got}, decoder expects {expected}")]
    LatentSize { expected: usize, got: usize },
    #[error("invalid decoder configuration: {0}")]
    Config(&'static str),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderConfig {
    pub latent_dim: usize,
    pub global_hidden: usize,
    pub local_hidden: usize,
    pub stroke_dim: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { latent_dim: 512, global_hidden: 128, local_hidden: 128, stroke_dim: 128 }
    }
}

/// Parameters of the two-level decoder, held as ids into a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct HDecoder {
    config: DecoderConfig,
    /// `l_R -> h_0^G`
    pub global_init: Linear,
    pub global_rnn: LstmCell,
    /// `h^G -> S`
    pub stroke_head: Linear,
    /// `S -> h_0^L`
    pub local_init: Linear,
    pub local_rnn: LstmCell,
    /// `h^L -> (x, y, pen logits)`
    pub point_head: Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPrediction {
    pub x: f64,
    pub y: f64,
    pub pen_logits: [f64; 3],
}

impl PointPrediction {
    pub fn from_slice(v: &[f64]) -> Self {
        PointPrediction { x: v[0], y: v[1], pen_logits: [v[2], v[3], v[4]] }
    }

    pub fn pen_probs(&self) -> [f64; 3] {
        let mut p = self.pen_logits;
        crate::tensor::softmax_in_place(&mut p);
        p
    }

    /// Argmax pen state; ties resolve toward `Down < Up < End`.
    pub fn greedy_pen(&self) -> PenState {
        let mut best = 0;
        for i in 1..3 {
            if self.pen_logits[i] > self.pen_logits[best] {
                best = i;
            }
        }
        PenState::ALL[best]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnrollLimits {
    pub max_strokes: usize,
    pub max_points_per_stroke: usize,
}

impl UnrollLimits {
    pub fn new(max_strokes: usize, max_points_per_stroke: usize) -> Result<Self, DecoderError> {
        if max_strokes == 0 || max_points_per_stroke == 0 {
            return Err(DecoderError::Config("unroll limits must be at least 1"));
        }
        Ok(UnrollLimits { max_strokes, max_points_per_stroke })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMode {
    Greedy,
    Stochastic { seed: u64, temperature: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub sequence: Stroke5Sequence,
    /// Coordinates pulled back into `[0, 1]`.
    pub clamped: usize,
    pub global_steps: usize,
    pub local_steps: usize,
}

/// Tape handles for one teacher-forced loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub mse: Var,
    pub ce: Var,
    pub global_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub mse: f64,
    pub ce: f64,
    pub global_steps: usize,
}

fn point_tensor(p: Point5) -> Tensor {
    Tensor::vector(p.to_array().to_vec())
}

impl HDecoder {
    pub fn new(config: DecoderConfig, store: &mut ParamStore, prefix: &str, rng: &mut Rng) -> Result<Self, DecoderError> {
        let DecoderConfig { latent_dim: d, global_hidden: hg, local_hidden: hl, stroke_dim: s } = config;
        if d == 0 || hg == 0 || hl == 0 || s == 0 {
            return Err(DecoderError::Config("decoder sizes must be positive"));
        }
        let name = |part: &str| alloc::format!("{prefix}.{part}");
        Ok(HDecoder {
            config,
            global_init: Linear::new(store, &name("global_init"), d, hg, rng),
            global_rnn: LstmCell::new(store, &name("global_rnn"), d + s, hg, rng),
            stroke_head: Linear::new(store, &name("stroke_head"), hg, s, rng),
            local_init: Linear::new(store, &name("local_init"), s, hl, rng),
            local_rnn: LstmCell::new(store, &name("local_rnn"), s + 5, hl, rng),
            point_head: Linear::new(store, &name("point_head"), hl, 5, rng),
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    fn check_latent(&self, tape: &Tape, l_r: Var) -> Result<(), DecoderError> {
        let got = tape.value(l_r).numel();
        if tape.shape(l_r).len() != 1 || got != self.config.latent_dim {
            return Err(DecoderError::LatentSize { expected: self.config.latent_dim, got });
        }
        Ok(())
    }

    /// `h_0^G = W_h^G l_R + b_h^G`, `c_0^G = 0`.
    pub fn init_global(&self, tape: &mut Tape, params: &Binding, l_r: Var) -> Result<LstmState, DecoderError> {
        self.check_latent(tape, l_r)?;
        let h = self.global_init.forward(tape, params, l_r)?;
        let c = self.global_rnn.zero_cell(tape);
        Ok(LstmState { h, c })
    }

    /// One stroke-level step on `[l_R, S_{i-1}]`; returns the new state and `S_i`.
    pub fn global_step(
        &self,
        tape: &mut Tape,
        params: &Binding,
        state: LstmState,
        l_r: Var,
        prev_stroke: Var,
    ) -> Result<(LstmState, Var), DecoderError> {
        let input = tape.concat(&[l_r, prev_stroke])?;
        let state = self.global_rnn.step(tape, params, input, state)?;
        let s = self.stroke_head.forward(tape, params, state.h)?;
        Ok((state, s))
    }

    /// `h_0^L = W_h^L S_i + b_h^L`, `c_0^L = 0`.
    pub fn init_local(&self, tape: &mut Tape, params: &Binding, stroke: Var) -> Result<LstmState, DecoderError> {
        let h = self.local_init.forward(tape, params, stroke)?;
        let c = self.local_rnn.zero_cell(tape);
        Ok(LstmState { h, c })
    }

    /// One point-level step on `[S_i, P_{t-1}]`; returns the state and the
    /// 5-wide readout.
    pub fn local_step(
        &self,
        tape: &mut Tape,
        params: &Binding,
        state: LstmState,
        stroke: Var,
        prev_point: Var,
    ) -> Result<(LstmState, Var), DecoderError> {
        if tape.shape(prev_point) != [5] {
            return Err(TensorError::Shape { op: "local_step", shapes: vec![tape.shape(prev_point).to_vec(), vec![5]] }.into());
        }
        let input = tape.concat(&[stroke, prev_point])?;
        let state = self.local_rnn.step(tape, params, input, state)?;
        let out = self.point_head.forward(tape, params, state.h)?;
        Ok((state, out))
    }

    pub fn zero_stroke(&self, tape: &mut Tape) -> Var {
        tape.constant(Tensor::zeros(&[self.config.stroke_dim]))
    }

    /// Teacher-forced loss: ground-truth stroke boundaries drive the global
    /// unroll and ground-truth points are fed back locally. The coordinate
    /// term is the mean squared error over all `2N` predicted coordinates;
    /// the pen term is the mean cross-entropy over all `N` points, forced
    /// `Up`/`End` points included. `total = mse + lambda * ce`.
    pub fn teacher_forced_loss(
        &self,
        tape: &mut Tape,
        params: &Binding,
        l_r: Var,
        target: &Stroke5Sequence,
        lambda: f64,
    ) -> Result<LossVars, DecoderError> {
        let points = target.points();
        let mut g_state = self.init_global(tape, params, l_r)?;
        let mut prev_stroke = self.zero_stroke(tape);
        let mut prev = start_token();
        let mut coords = Vec::with_capacity(points.len());
        let mut logits = Vec::with_capacity(points.len());
        let spans = target.stroke_spans();
        for &(start, end) in &spans {
            let (next, stroke) = self.global_step(tape, params, g_state, l_r, prev_stroke)?;
            g_state = next;
            let mut l_state = self.init_local(tape, params, stroke)?;
            for p in &points[start..end] {
                let prev_var = tape.constant(point_tensor(prev));
                let (next, out) = self.local_step(tape, params, l_state, stroke, prev_var)?;
                l_state = next;
                coords.push(tape.slice(out, 0, 2)?);
                logits.push(tape.slice(out, 2, 3)?);
                prev = *p;
            }
            prev_stroke = stroke;
        }
        let n = points.len();
        let pred_xy = tape.concat(&coords)?;
        let target_xy = tape.constant(Tensor::vector(points.iter().flat_map(|p| [p.x, p.y]).collect()));
        let mse = tape.mse_loss(pred_xy, target_xy)?;
        let flat = tape.concat(&logits)?;
        let rows = tape.reshape(flat, &[n, 3])?;
        let one_hot = Tensor::new(
            vec![n, 3],
            points.iter().flat_map(|p| p.pen.one_hot().map(f64::from)).collect(),
        )?;
        let ce = tape.cross_entropy(rows, &one_hot)?;
        let weighted = tape.scale(ce, lambda)?;
        let total = tape.add(mse, weighted)?;
        Ok(LossVars { total, mse, ce, global_steps: spans.len() })
    }

    /// Inference-only teacher-forced loss for a latent given as values.
    pub fn loss_values(
        &self,
        params: &ParamStore,
        l_r: &[f64],
        target: &Stroke5Sequence,
        lambda: f64,
    ) -> Result<LossValues, DecoderError> {
        let mut tape = Tape::new();
        let b = params.bind_frozen(&mut tape);
        let l = tape.constant(Tensor::vector(l_r.to_vec()));
        let v = self.teacher_forced_loss(&mut tape, &b, l, target, lambda)?;
        Ok(LossValues {
            total: tape.value(v.total).data()[0],
            mse: tape.value(v.mse).data()[0],
            ce: tape.value(v.ce).data()[0],
            global_steps: v.global_steps,
        })
    }

    /// Autoregressive decoding. Local steps emit points; an `Up` advances
    /// the global RNN and restarts the local one, an `End` halts. A stroke
    /// reaching `max_points_per_stroke` is closed with a forced `Up`, and
    /// any closing point of stroke `max_strokes` becomes `End`, so the run
    /// takes at most `max_strokes * max_points_per_stroke` local steps.
    /// Emitted coordinates are clamped to `[0, 1]` and fed back as clamped.
    pub fn sample(
        &self,
        params: &ParamStore,
        l_r: &[f64],
        limits: UnrollLimits,
        mode: SampleMode,
    ) -> Result<SampleOutput, DecoderError> {
        let mut rng = match mode {
            SampleMode::Greedy => None,
            SampleMode::Stochastic { seed, temperature } => {
                if !(temperature.is_finite() && temperature > 0.0) {
                    return Err(DecoderError::Config("temperature must be positive"));
                }
                Some((Rng::seed_from_u64(seed), temperature))
            }
        };
        let mut tape = Tape::new();
        let b = params.bind_frozen(&mut tape);
        let l = tape.constant(Tensor::vector(l_r.to_vec()));
        let mut g_state = self.init_global(&mut tape, &b, l)?;
        let mut prev_stroke = self.zero_stroke(&mut tape);
        let mut prev = start_token();
        let mut points = Vec::new();
        let mut clamped = 0;
        let (mut global_steps, mut local_steps) = (0, 0);
        'strokes: for stroke_idx in 0..limits.max_strokes {
            let (next, stroke) = self.global_step(&mut tape, &b, g_state, l, prev_stroke)?;
            g_state = next;
            global_steps += 1;
            let mut l_state = self.init_local(&mut tape, &b, stroke)?;
            let last_stroke = stroke_idx + 1 == limits.max_strokes;
            for j in 0..limits.max_points_per_stroke {
                let prev_var = tape.constant(point_tensor(prev));
                let (next, out) = self.local_step(&mut tape, &b, l_state, stroke, prev_var)?;
                l_state = next;
                local_steps += 1;
                let pred = PointPrediction::from_slice(tape.value(out).data());
                let mut pen = match rng.as_mut() {
                    None => pred.greedy_pen(),
                    Some((r, t)) => sample_pen(&pred.pen_logits, *t, r),
                };
                if pen == PenState::Down && j + 1 == limits.max_points_per_stroke {
                    pen = PenState::Up;
                }
                if pen == PenState::Up && last_stroke {
                    pen = PenState::End;
                }
                let (x, cx) = clamp_unit(pred.x);
                let (y, cy) = clamp_unit(pred.y);
                clamped += usize::from(cx) + usize::from(cy);
                let point = Point5::new(x, y, pen);
                points.push(point);
                prev = point;
                match pen {
                    PenState::Down => {}
                    PenState::Up => break,
                    PenState::End => break 'strokes,
                }
            }
            prev_stroke = stroke;
        }
        let sequence = Stroke5Sequence::new(points)?;
        Ok(SampleOutput { sequence, clamped, global_steps, local_steps })
    }
}

fn clamp_unit(v: f64) -> (f64, bool) {
    if v < 0.0 {
        (0.0, true)
    } else if v > 1.0 {
        (1.0, true)
    } else {
        (v, false)
    }
}

fn sample_pen(logits: &[f64; 3], temperature: f64, rng: &mut Rng) -> PenState {
    let mut p = logits.map(|z| z / temperature);
    crate::tensor::softmax_in_place(&mut p);
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return PenState::ALL[i];
        }
    }
    PenState::End
}

/// Encoder and decoder sharing one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct PretextModel {
    pub encoder: ConvEncoder,
    pub decoder: HDecoder,
    pub params: ParamStore,
}

impl PretextModel {
    pub fn new(encoder: EncoderConfig, decoder: DecoderConfig, seed: u64) -> Result<Self, DecoderError> {
        if encoder.latent_dim != decoder.latent_dim {
            return Err(DecoderError::Config("encoder latent width differs from decoder latent width"));
        }
        let mut rng = Rng::derive(seed, 0x1417);
        let mut params = ParamStore::new();
        let encoder = ConvEncoder::new(encoder, &mut params, "encoder", &mut rng)?;
        let decoder = HDecoder::new(decoder, &mut params, "decoder", &mut rng)?;
        Ok(PretextModel { encoder, decoder, params })
    }

    /// Rebuilds the architecture and then adopts `params`, checking that
    /// names and shapes line up.
    pub fn from_params(encoder: EncoderConfig, decoder: DecoderConfig, params: ParamStore) -> Result<Self, DecoderError> {
        let mut model = Self::new(encoder, decoder, 0)?;
        if params.len() != model.params.len() {
            return Err(DecoderError::Config("parameter count does not match the architecture"));
        }
        for ((n1, t1), (n2, t2)) in model.params.iter().zip(params.iter()) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(DecoderError::Config("parameter names or shapes do not match the architecture"));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn latent(&self, raster: &RasterSketch) -> Result<Vec<f64>, DecoderError> {
        Ok(self.encoder.encode(&self.params, raster)?)
    }

    pub fn loss(&self, item: &PretextItem, lambda: f64) -> Result<LossValues, DecoderError> {
        let l = self.latent(&item.raster)?;
        self.decoder.loss_values(&self.params, &l, &item.target, lambda)
    }

    pub fn sample(&self, raster: &RasterSketch, limits: UnrollLimits, mode: SampleMode) -> Result<SampleOutput, DecoderError> {
        let l = self.latent(raster)?;
        self.decoder.sample(&self.params, &l, limits, mode)
    }
}

/// A training example: the raster input and its stroke-5 target.
#[derive(Debug, Clone, PartialEq)]
pub struct PretextItem {
    pub raster: RasterSketch,
    pub target: Stroke5Sequence,
}

impl PretextItem {
    /// Rasterizes the normalized sketch at `size x size`.
    pub fn from_sketch(sketch: &VectorSketch, size: usize, thickness: usize) -> Result<Self, DecoderError> {
        let normalized = sketch::normalize(sketch)?;
        Ok(PretextItem {
            raster: geometry::rasterize(&normalized, size, size, thickness)?,
            target: sketch::encode_stroke5(sketch)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretextConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub seed: u64,
    pub thickness: usize,
    pub clip_norm: Option<f64>,
}

impl Default for PretextConfig {
    fn default() -> Self {
        PretextConfig {
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            epochs: 10,
            batch_size: 4,
            lr: 1e-3,
            lambda: 1.0,
            seed: 0,
            thickness: 1,
            clip_norm: Some(1.0),
        }
    }
}

/// Mean losses over the corpus, evaluated with the parameters as they
/// stand after `epoch` epochs (epoch 0 is the initialization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub mse: f64,
    pub ce: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretextOutcome {
    pub model: PretextModel,
    pub curve: Vec<EpochLoss>,
}

fn corpus_loss(model: &PretextModel, items: &[PretextItem], epoch: usize, lambda: f64) -> Result<EpochLoss, DecoderError> {
    let mut acc = EpochLoss { epoch, total: 0.0, mse: 0.0, ce: 0.0 };
    for item in items {
        let l = model.loss(item, lambda)?;
        acc.total += l.total;
        acc.mse += l.mse;
        acc.ce += l.ce;
    }
    let n = items.len() as f64;
    acc.total /= n;
    acc.mse /= n;
    acc.ce /= n;
    Ok(acc)
}

/// Trains encoder and decoder jointly on raster-to-stroke-5 reconstruction
/// with Adam. The visiting order is reshuffled every epoch from `seed`, and
/// each batch's gradient is the mean over its items, so a fixed seed gives
/// a bit-identical run.
pub fn train_pretext(corpus: &[VectorSketch], config: &PretextConfig) -> Result<PretextOutcome, DecoderError> {
    if corpus.is_empty() {
        return Err(DecoderError::EmptyCorpus);
    }
    let items = corpus
        .iter()
        .map(|s| PretextItem::from_sketch(s, config.encoder.input_size, config.thickness))
        .collect::<Result<Vec<_>, _>>()?;
    let model = PretextModel::new(config.encoder.clone(), config.decoder, config.seed)?;
    train_pretext_items(model, &items, config)
}

/// Continues training an existing model on prepared items.
pub fn train_pretext_items(
    mut model: PretextModel,
    items: &[PretextItem],
    config: &PretextConfig,
) -> Result<PretextOutcome, DecoderError> {
    if items.is_empty() {
        return Err(DecoderError::EmptyCorpus);
    }
    if config.batch_size == 0 {
        return Err(DecoderError::Config("batch size must be at least 1"));
    }
    let mut opt = Optimizer::adam(config.lr, &model.params);
    let mut rng = Rng::derive(config.seed, 0x7e87);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut curve = vec![corpus_loss(&model, items, 0, config.lambda)?];
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let b = model.params.bind(&mut tape);
            let mut sum: Option<Var> = None;
            for &i in batch {
                let l = model.encoder.forward_raster(&mut tape, &b, &items[i].raster)?;
                let loss = model.decoder.teacher_forced_loss(&mut tape, &b, l, &items[i].target, config.lambda)?;
                sum = Some(match sum {
                    None => loss.total,
                    Some(acc) => tape.add(acc, loss.total)?,
                });
            }
            let sum = sum.expect("chunks are non-empty");
            let mean = tape.scale(sum, 1.0 / batch.len() as f64)?;
            let grads = tape.backward(mean)?;
            let mut g = model.params.collect_grads(&b, &grads);
            if let Some(max) = config.clip_norm {
                clip_global_norm(&mut g, max);
            }
            opt.step(&mut model.params, &g)?;
        }
        curve.push(corpus_loss(&model, items, epoch, config.lambda)?);
    }
    Ok(PretextOutcome { model, curve })
}
