use rand::Rng;

use super::{uniform_tensor, Bound, WEIGHT_INIT_RANGE};
use crate::autodiff::{Tape, Tensor, Var};
use crate::checkpoint::ModelCheckpoint;
use crate::error::{Error, Result};

/// One LSTM direction bound on a tape.
///
/// `w` is `[4h × (input + h)]` with gate blocks in the order input, forget,
/// cell, output; `b` is `[4h]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w: Var,
    pub b: Var,
    pub hidden: usize,
}

impl LstmParams {
    pub fn bind(bound: &Bound, tape: &Tape, prefix: &str) -> Result<Self> {
        let w = bound.var(&format!("{prefix}.w"))?;
        let b = bound.var(&format!("{prefix}.b"))?;
        let hidden = tape.shape(b)[0] / 4;
        Ok(LstmParams { w, b, hidden })
    }

    /// Adds `prefix.w` / `prefix.b`; forget-gate bias starts at 1.
    pub fn init<R: Rng + ?Sized>(ckpt: &mut ModelCheckpoint, prefix: &str, input: usize, hidden: usize, rng: &mut R) {
        ckpt.insert(
            format!("{prefix}.w"),
            uniform_tensor(&[4 * hidden, input + hidden], WEIGHT_INIT_RANGE, rng),
            false,
        );
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        ckpt.insert(format!("{prefix}.b"), Tensor::vector(b), false);
    }
}

/// `(h', c')` from input `x` and state `(h, c)`.
pub fn lstm_step(tape: &mut Tape, p: &LstmParams, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let k = p.hidden;
    if tape.value(h).len() != k || tape.value(c).len() != k {
        return Err(Error::Dimension(format!("LSTM state must have {k} entries")));
    }
    let xh = tape.concat(&[x, h])?;
    let z = tape.affine(xh, p.w, Some(p.b))?;
    let i = tape.slice(z, 0, k)?;
    let f = tape.slice(z, k, k)?;
    let g = tape.slice(z, 2 * k, k)?;
    let o = tape.slice(z, 3 * k, k)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Runs a direction over `[T × d]` inputs from a zero state, returning the
/// hidden state at every step in input order.
pub fn run_lstm(tape: &mut Tape, p: &LstmParams, inputs: Var, reverse: bool) -> Result<Vec<Var>> {
    let steps = tape.shape(inputs)[0];
    let mut h = tape.constant(Tensor::zeros(&[p.hidden]));
    let mut c = tape.constant(Tensor::zeros(&[p.hidden]));
    let mut out = vec![h; steps];
    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    for t in order {
        let x = tape.row(inputs, t)?;
        (h, c) = lstm_step(tape, p, x, h, c)?;
        out[t] = h;
    }
    Ok(out)
}
