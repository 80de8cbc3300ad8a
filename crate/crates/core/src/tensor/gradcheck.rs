use alloc::vec::Vec;

use super::{Binding, ParamStore, Tape, TensorError, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Parameters with more entries than this are checked on a random
    /// subset of this size.
    pub max_entries_per_param: usize,
    /// Denominator floor of the relative error, so entries whose true
    /// gradient is ~0 are compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-5, max_entries_per_param: 64, floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

/// Compares `backward` against central finite differences for the scalar
/// built by `build`. The relative error of one entry is
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
///
/// ReLU and max-pool kinks are not differentiable; callers keep inputs
/// away from them (random jitter is enough at `eps` = 1e-5).
pub fn grad_check<F, E>(build: F, params: &ParamStore, config: GradCheckConfig) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &Binding) -> Result<Var, E>,
    E: From<TensorError>,
{
    let eval = |store: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new();
        let binding = store.bind_frozen(&mut tape);
        let out = build(&mut tape, &binding)?;
        tape.value(out).item().ok_or_else(|| TensorError::NotScalar(tape.shape(out).to_vec()).into())
    };

    let mut tape = Tape::new();
    let binding = params.bind(&mut tape);
    let loss = build(&mut tape, &binding)?;
    let grads = tape.backward(loss)?;
    let analytic = params.collect_grads(&binding, &grads);

    let mut rng = Rng::seed_from_u64(config.seed);
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for id in params.ids() {
        let n = params.get(id).numel();
        let mut entries: Vec<usize> = (0..n).collect();
        if n > config.max_entries_per_param {
            rng.shuffle(&mut entries);
            entries.truncate(config.max_entries_per_param);
            entries.sort_unstable();
        }
        for j in entries {
            let orig = params.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = orig + config.eps;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[j] = orig - config.eps;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * config.eps);
            let a = analytic[id.index()].data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(config.floor);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_rel_error: worst, entries_checked: checked })
}
