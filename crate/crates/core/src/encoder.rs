//! Convolutional raster encoder.
//!
//! A stack of `conv -> ReLU` layers produces a feature map of shape
//! `[c, h', w']`; a global max pool reduces it to `c` values, which are
//! projected to the latent width `d` when `c != d`. Conv weights use
//! He-uniform initialization (`+-sqrt(6 / fan_in)`), biases start at zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::RasterSketch;
use crate::math;
use crate::nn::{uniform_tensor, Linear};
use crate::rng::Rng;
use crate::tensor::{Binding, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("raster is {got_w}x{got_h}, encoder expects {expected}x{expected}")]
    InputSize { expected: usize, got_w: usize, got_h: usize },
    #[error("invalid encoder configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec { out_channels, kernel, stride, padding }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Side of the square input raster.
    pub input_size: usize,
    pub layers: Vec<ConvSpec>,
    pub latent_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_size: 64,
            layers: vec![
                ConvSpec::new(16, 3, 2, 1),
                ConvSpec::new(32, 3, 2, 1),
                ConvSpec::new(64, 3, 2, 1),
                ConvSpec::new(128, 3, 2, 1),
            ],
            latent_dim: 512,
        }
    }
}

impl EncoderConfig {
    /// Output feature map `(c, h', w')`.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize), EncoderError> {
        if self.layers.is_empty() {
            return Err(EncoderError::Config("at least one conv layer is required"));
        }
        if self.latent_dim == 0 || self.input_size == 0 {
            return Err(EncoderError::Config("sizes must be positive"));
        }
        let mut side = self.input_size;
        let mut channels = 1;
        for l in &self.layers {
            if l.out_channels == 0 || l.kernel == 0 || l.stride == 0 {
                return Err(EncoderError::Config("conv layer sizes must be positive"));
            }
            if side + 2 * l.padding < l.kernel {
                return Err(EncoderError::Config("kernel larger than padded feature map"));
            }
            side = (side + 2 * l.padding - l.kernel) / l.stride + 1;
            channels = l.out_channels;
        }
        Ok((channels, side, side))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvLayer {
    kernel: ParamId,
    bias: ParamId,
    spec: ConvSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    config: EncoderConfig,
    convs: Vec<ConvLayer>,
    projection: Option<Linear>,
}

impl ConvEncoder {
    /// Registers the encoder's parameters under `prefix` (e.g. `encoder`).
    pub fn new(
        config: EncoderConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut Rng,
    ) -> Result<Self, EncoderError> {
        let (c, _, _) = config.feature_shape()?;
        let mut in_channels = 1;
        let mut convs = Vec::new();
        for (i, spec) in config.layers.iter().enumerate() {
            let fan_in = in_channels * spec.kernel * spec.kernel;
            let bound = math::sqrt(6.0 / fan_in as f64);
            let kernel = store.add(
                format!("{prefix}.conv{i}.weight"),
                uniform_tensor(&[spec.out_channels, in_channels, spec.kernel, spec.kernel], bound, rng),
            );
            let bias = store.add(format!("{prefix}.conv{i}.bias"), Tensor::zeros(&[spec.out_channels]));
            convs.push(ConvLayer { kernel, bias, spec: *spec });
            in_channels = spec.out_channels;
        }
        let projection = (c != config.latent_dim)
            .then(|| Linear::new(store, &format!("{prefix}.proj"), c, config.latent_dim, rng));
        Ok(ConvEncoder { config, convs, projection })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Every parameter this encoder owns, in registration order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.convs.iter().flat_map(|c| [c.kernel, c.bias]).collect();
        if let Some(p) = &self.projection {
            ids.extend([p.weight, p.bias]);
        }
        ids
    }

    pub fn input_tensor(&self, raster: &RasterSketch) -> Result<Tensor, EncoderError> {
        let n = self.config.input_size;
        if raster.width != n || raster.height != n {
            return Err(EncoderError::InputSize { expected: n, got_w: raster.width, got_h: raster.height });
        }
        Ok(Tensor::new(vec![1, n, n], raster.pixels.clone())?)
    }

    /// The final `[c, h', w']` activation map.
    pub fn feature_map(&self, tape: &mut Tape, params: &Binding, input: Var) -> Result<Var, EncoderError> {
        let mut x = input;
        for layer in &self.convs {
            let y = tape.conv2d(x, params[layer.kernel], params[layer.bias], layer.spec.stride, layer.spec.padding)?;
            x = tape.relu(y)?;
        }
        Ok(x)
    }

    /// Latent `l_R` for an input placed on the tape as `[1, n, n]`.
    pub fn forward(&self, tape: &mut Tape, params: &Binding, input: Var) -> Result<Var, EncoderError> {
        let f = self.feature_map(tape, params, input)?;
        let pooled = tape.global_max_pool(f)?;
        Ok(match &self.projection {
            Some(p) => p.forward(tape, params, pooled)?,
            None => pooled,
        })
    }

    pub fn forward_raster(
        &self,
        tape: &mut Tape,
        params: &Binding,
        raster: &RasterSketch,
    ) -> Result<Var, EncoderError> {
        let input = tape.constant(self.input_tensor(raster)?);
        self.forward(tape, params, input)
    }

    /// Inference-only latent.
    pub fn encode(&self, params: &ParamStore, raster: &RasterSketch) -> Result<Vec<f64>, EncoderError> {
        let mut tape = Tape::new();
        let binding = params.bind_frozen(&mut tape);
        let out = self.forward_raster(&mut tape, &binding, raster)?;
        Ok(tape.value(out).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, GradCheckConfig};

    fn small() -> EncoderConfig {
        EncoderConfig {
            input_size: 12,
            layers: vec![ConvSpec::new(3, 3, 2, 1), ConvSpec::new(4, 3, 2, 1)],
            latent_dim: 5,
        }
    }

    #[test]
    fn latent_length_and_determinism() {
        let mut store = ParamStore::new();
        let mut rng = Rng::seed_from_u64(1);
        let enc = ConvEncoder::new(small(), &mut store, "encoder", &mut rng).unwrap();
        let blank = RasterSketch::blank(12, 12);
        let a = enc.encode(&store, &blank).unwrap();
        let b = enc.encode(&store, &blank).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
    }

    #[test]
    fn no_projection_when_channels_match() {
        let mut cfg = small();
        cfg.latent_dim = 4;
        let mut store = ParamStore::new();
        let enc = ConvEncoder::new(cfg, &mut store, "e", &mut Rng::seed_from_u64(0)).unwrap();
        assert_eq!(store.len(), 4);
        assert_eq!(enc.param_ids().len(), 4);
        // Zero biases and a blank input leave every activation at zero.
        assert_eq!(enc.encode(&store, &RasterSketch::blank(12, 12)).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn wrong_raster_size() {
        let mut store = ParamStore::new();
        let enc = ConvEncoder::new(small(), &mut store, "e", &mut Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(
            enc.encode(&store, &RasterSketch::blank(16, 12)),
            Err(EncoderError::InputSize { expected: 12, .. })
        ));
    }

    #[test]
    fn feature_shape_default() {
        assert_eq!(EncoderConfig::default().feature_shape().unwrap(), (128, 4, 4));
    }

    #[test]
    fn encoder_grad_check() {
        let mut store = ParamStore::new();
        let mut rng = Rng::seed_from_u64(7);
        let enc = ConvEncoder::new(small(), &mut store, "e", &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).data_mut() {
                *v += rng.uniform(-0.1, 0.1);
            }
        }
        // Jittered input keeps ReLU and max-pool away from exact ties.
        let pixels: Vec<f64> = (0..144).map(|_| rng.uniform(0.0, 1.0)).collect();
        let input = Tensor::new(vec![1, 12, 12], pixels).unwrap();
        let report = grad_check(
            |tape, b| {
                let x = tape.constant(input.clone());
                let l = enc.forward(tape, b, x)?;
                let sq = tape.mul(l, l)?;
                Ok::<_, EncoderError>(tape.sum(sq)?)
            },
            &store,
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
