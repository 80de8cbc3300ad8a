//! Affine and LSTM layers over a [`ParamStore`].
//!
//! Initialization: weights are uniform in `+-1/sqrt(fan_in)`, biases zero,
//! except the LSTM forget-gate bias which starts at [`FORGET_BIAS`].

use alloc::format;

use crate::math;
use crate::rng::Rng;
use crate::tensor::{Binding, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

pub const FORGET_BIAS: f64 = 1.0;

pub(crate) fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform(-bound, bound);
    }
    t
}

/// `y = W x + b` with `W: [out, in]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / math::sqrt(in_dim as f64);
        let weight = store.add(format!("{name}.weight"), uniform_tensor(&[out_dim, in_dim], bound, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Linear { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Binding, x: Var) -> Result<Var, TensorError> {
        let wx = tape.matvec(params[self.weight], x)?;
        tape.add(wx, params[self.bias])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// Standard LSTM cell. Gate rows in the fused weight are ordered
/// input, forget, candidate, output; the weight multiplies `[x, h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / math::sqrt(hidden as f64);
        let weight = store.add(
            format!("{name}.weight"),
            uniform_tensor(&[4 * hidden, input_dim + hidden], bound, rng),
        );
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = FORGET_BIAS);
        let bias = store.add(format!("{name}.bias"), b);
        LstmCell { weight, bias, input_dim, hidden }
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        params: &Binding,
        x: Var,
        state: LstmState,
    ) -> Result<LstmState, TensorError> {
        let h = self.hidden;
        let xh = tape.concat(&[x, state.h])?;
        let z = tape.matvec(params[self.weight], xh)?;
        let z = tape.add(z, params[self.bias])?;
        let zi = tape.slice(z, 0, h)?;
        let zf = tape.slice(z, h, h)?;
        let zg = tape.slice(z, 2 * h, h)?;
        let zo = tape.slice(z, 3 * h, h)?;
        let i = tape.sigmoid(zi)?;
        let f = tape.sigmoid(zf)?;
        let g = tape.tanh(zg)?;
        let o = tape.sigmoid(zo)?;
        let keep = tape.mul(f, state.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok(LstmState { h, c })
    }

    pub fn zero_cell(&self, tape: &mut Tape) -> Var {
        tape.constant(Tensor::zeros(&[self.hidden]))
    }
}
