//! Run configuration: a TOML file whose values sit between the built-in
//! defaults and command-line flags (flags win).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scenesketch_core::encoder::{ConvSpec, EncoderConfig};
use scenesketch_core::hdecoder::{DecoderConfig, PretextConfig};
use scenesketch_core::retrieval::{Distance, EmbeddingConfig, RetrievalConfig};
use scenesketch_core::synth::SynthSpec;

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pretext,
    Retrieval,
    Eval,
    Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
    pub latent_dim: usize,
}

impl Default for EncoderSpec {
    /// Five stride-2 layers take a 32x32 raster down to a 1x1 map.
    fn default() -> Self {
        let layer = |c| LayerSpec { out_channels: c, kernel: 3, stride: 2, padding: 1 };
        EncoderSpec { input_size: 32, layers: [8, 16, 32, 64, 64].map(layer).to_vec(), latent_dim: 64 }
    }
}

impl EncoderSpec {
    pub fn to_core(&self) -> EncoderConfig {
        EncoderConfig {
            input_size: self.input_size,
            layers: self.layers.iter().map(|l| ConvSpec::new(l.out_channels, l.kernel, l.stride, l.padding)).collect(),
            latent_dim: self.latent_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSpec {
    pub global_hidden: usize,
    pub local_hidden: usize,
    pub stroke_dim: usize,
}

impl Default for DecoderSpec {
    fn default() -> Self {
        DecoderSpec { global_hidden: 64, local_hidden: 64, stroke_dim: 32 }
    }
}

impl DecoderSpec {
    pub fn to_core(&self, latent_dim: usize) -> DecoderConfig {
        DecoderConfig { latent_dim, global_hidden: self.global_hidden, local_hidden: self.local_hidden, stroke_dim: self.stroke_dim }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretextSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub thickness: usize,
    /// Zero disables clipping.
    pub clip_norm: f64,
}

impl Default for PretextSection {
    fn default() -> Self {
        PretextSection { epochs: 20, batch_size: 4, lr: 5e-3, lambda: 1.0, thickness: 1, clip_norm: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceSpec {
    #[default]
    SqEuclidean,
    Cosine,
}

impl DistanceSpec {
    pub fn to_core(self) -> Distance {
        match self {
            DistanceSpec::SqEuclidean => Distance::SqEuclidean,
            DistanceSpec::Cosine => Distance::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub embed_dim: usize,
    pub normalize: bool,
    pub distance: DistanceSpec,
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Sketch raster line width; photos keep the width they were rendered with.
    pub thickness: usize,
    pub train_fraction: f64,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            embed_dim: 32,
            normalize: false,
            distance: DistanceSpec::SqEuclidean,
            margin: scenesketch_core::retrieval::DEFAULT_MARGIN,
            epochs: 30,
            batch_size: 16,
            lr: 1e-2,
            clip_norm: 5.0,
            thickness: 2,
            train_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n: usize,
    pub canvas: f64,
    pub min_primitives: usize,
    pub max_primitives: usize,
    pub jitter: f64,
    pub photo_size: usize,
    pub photo_thickness: usize,
    pub n_users: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            n: 200,
            canvas: 256.0,
            min_primitives: 1,
            max_primitives: 4,
            jitter: 2.0,
            photo_size: 32,
            photo_thickness: 2,
            n_users: 5,
        }
    }
}

impl DataSection {
    pub fn to_core(&self) -> SynthSpec {
        SynthSpec {
            canvas: self.canvas,
            min_primitives: self.min_primitives,
            max_primitives: self.max_primitives,
            jitter: self.jitter,
            photo_size: self.photo_size,
            photo_thickness: self.photo_thickness,
            n_users: self.n_users,
        }
    }
}

/// Input paths a config may name; each must exist when the file is loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub input: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub warm_start: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Option<Task>,
    pub seed: u64,
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
    pub pretext: PretextSection,
    pub retrieval: RetrievalSection,
    pub data: DataSection,
    pub paths: PathsSection,
}

fn clip(v: f64) -> Option<f64> {
    (v > 0.0).then_some(v)
}

impl RunConfig {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(1);
            Error::parse(path, line, e.message())
        })?;
        // Relative paths resolve against the config file's directory.
        let base = path.parent().unwrap_or(Path::new(""));
        let mut cfg = cfg;
        for p in [&mut cfg.paths.input, &mut cfg.paths.data, &mut cfg.paths.warm_start]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "path named in config does not exist")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &fsio::read_to_string(path)?)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Rejects a config written for a different task.
    pub fn expect_task(&self, task: Task) -> Result<()> {
        match self.task {
            Some(t) if t != task => Err(Error::invalid(format!("config is for task {t:?}, command runs {task:?}"))),
            _ => Ok(()),
        }
    }

    pub fn pretext_config(&self) -> PretextConfig {
        let p = &self.pretext;
        PretextConfig {
            encoder: self.encoder.to_core(),
            decoder: self.decoder.to_core(self.encoder.latent_dim),
            epochs: p.epochs,
            batch_size: p.batch_size,
            lr: p.lr,
            lambda: p.lambda,
            seed: self.seed,
            thickness: p.thickness,
            clip_norm: clip(p.clip_norm),
        }
    }

    pub fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig { encoder: self.encoder.to_core(), embed_dim: self.retrieval.embed_dim, normalize: self.retrieval.normalize }
    }

    pub fn retrieval_config(&self) -> RetrievalConfig {
        let r = &self.retrieval;
        RetrievalConfig {
            model: self.embedding_config(),
            distance: r.distance.to_core(),
            margin: r.margin,
            lr: r.lr,
            batch_size: r.batch_size,
            epochs: r.epochs,
            seed: self.seed,
            clip_norm: clip(r.clip_norm),
        }
    }
}
