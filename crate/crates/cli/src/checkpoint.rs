//! JSON checkpoints: architecture description plus named parameter tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scenesketch_core::hdecoder::PretextModel;
use scenesketch_core::retrieval::EmbeddingModel;
use scenesketch_core::{ParamStore, Tensor};

use crate::config::{DecoderSpec, DistanceSpec, EncoderSpec};
use crate::error::{Error, Result};
use crate::fsio;
use crate::sketch_io::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Pretext {
        encoder: EncoderSpec,
        decoder: DecoderSpec,
        /// Line width used to rasterize training sketches.
        thickness: usize,
    },
    Retrieval {
        encoder: EncoderSpec,
        embed_dim: usize,
        normalize: bool,
        distance: DistanceSpec,
        thickness: usize,
        /// The user split the model was trained on.
        train_fraction: f64,
        split_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelSpec,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(model: ModelSpec, params: &ParamStore) -> Self {
        let tensors = params
            .iter()
            .map(|(name, t)| TensorRecord { name: name.to_string(), shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect();
        Checkpoint { format_version: FORMAT_VERSION, model, tensors }
    }

    pub fn params(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for t in &self.tensors {
            let tensor = Tensor::new(t.shape.clone(), t.data.clone())
                .map_err(|e| Error::invalid(format!("checkpoint tensor {:?}: {e}", t.name)))?;
            if store.find(&t.name).is_some() {
                return Err(Error::invalid(format!("checkpoint repeats tensor {:?}", t.name)));
            }
            store.add(t.name.clone(), tensor);
        }
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoints always serialize");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fsio::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::parse(path, 1, format!("unsupported format_version {}", ck.format_version)));
        }
        Ok(ck)
    }

    pub fn pretext_model(&self) -> Result<(PretextModel, usize)> {
        match &self.model {
            ModelSpec::Pretext { encoder, decoder, thickness } => {
                let model = PretextModel::from_params(encoder.to_core(), decoder.to_core(encoder.latent_dim), self.params()?)?;
                Ok((model, *thickness))
            }
            _ => Err(Error::invalid("checkpoint does not hold a pretext model")),
        }
    }

    pub fn embedding_model(&self) -> Result<EmbeddingModel> {
        match &self.model {
            ModelSpec::Retrieval { encoder, embed_dim, normalize, .. } => {
                let cfg = scenesketch_core::retrieval::EmbeddingConfig {
                    encoder: encoder.to_core(),
                    embed_dim: *embed_dim,
                    normalize: *normalize,
                };
                Ok(EmbeddingModel::from_params(cfg, self.params()?)?)
            }
            _ => Err(Error::invalid("checkpoint does not hold a retrieval model")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn pretext_round_trip() {
        let cfg = RunConfig::default();
        let pc = cfg.pretext_config();
        let model = PretextModel::new(pc.encoder.clone(), pc.decoder, 3).unwrap();
        let ck = Checkpoint::new(
            ModelSpec::Pretext { encoder: cfg.encoder.clone(), decoder: cfg.decoder, thickness: 1 },
            &model.params,
        );
        let back: Checkpoint = serde_json::from_str(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.pretext_model().unwrap().0, model);
        assert!(back.embedding_model().is_err());
    }
}
