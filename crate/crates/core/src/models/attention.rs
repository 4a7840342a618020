use rand::Rng;

use super::{uniform_tensor, Bound, WEIGHT_INIT_RANGE};
use crate::autodiff::{Tape, Tensor, Var};
use crate::checkpoint::ModelCheckpoint;
use crate::error::Result;

/// Additive attention: `score_j = v · tanh(W_dec s + W_enc a_j + b)`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    /// `[A × state]`
    pub w_dec: Var,
    /// `[A × annotation]`
    pub w_enc: Var,
    /// `[A]`
    pub b: Var,
    /// `[1 × A]`
    pub v: Var,
}

impl AttentionParams {
    pub fn bind(bound: &Bound, prefix: &str) -> Result<Self> {
        Ok(AttentionParams {
            w_dec: bound.var(&format!("{prefix}.w_dec"))?,
            w_enc: bound.var(&format!("{prefix}.w_enc"))?,
            b: bound.var(&format!("{prefix}.b"))?,
            v: bound.var(&format!("{prefix}.v"))?,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        ckpt: &mut ModelCheckpoint,
        prefix: &str,
        state: usize,
        annotation: usize,
        dim: usize,
        rng: &mut R,
    ) {
        ckpt.insert(format!("{prefix}.w_dec"), uniform_tensor(&[dim, state], WEIGHT_INIT_RANGE, rng), false);
        ckpt.insert(format!("{prefix}.w_enc"), uniform_tensor(&[dim, annotation], WEIGHT_INIT_RANGE, rng), false);
        ckpt.insert(format!("{prefix}.b"), Tensor::zeros(&[dim]), false);
        ckpt.insert(format!("{prefix}.v"), uniform_tensor(&[1, dim], WEIGHT_INIT_RANGE, rng), false);
    }
}

/// Projected annotations `W_enc a_j + b`, computed once per sequence.
pub fn attention_keys(tape: &mut Tape, p: &AttentionParams, annotations: Var) -> Result<Var> {
    tape.affine(annotations, p.w_enc, Some(p.b))
}

/// Returns `(context, weights)` for one query state.
pub fn attend_with_keys(
    tape: &mut Tape,
    p: &AttentionParams,
    state: Var,
    annotations: Var,
    keys: Var,
) -> Result<(Var, Var)> {
    let steps = tape.shape(annotations)[0];
    let width = tape.shape(annotations)[1];
    let q = tape.affine(state, p.w_dec, None)?;
    let e = tape.add_row_broadcast(keys, q)?;
    let e = tape.tanh(e);
    let scores = tape.affine(e, p.v, None)?;
    let scores = tape.reshape(scores, &[steps])?;
    let weights = tape.softmax_rows(scores)?;
    let row = tape.reshape(weights, &[1, steps])?;
    let ctx = tape.matmul(row, annotations)?;
    let ctx = tape.reshape(ctx, &[width])?;
    Ok((ctx, weights))
}

pub fn attend(tape: &mut Tape, p: &AttentionParams, state: Var, annotations: Var) -> Result<(Var, Var)> {
    let keys = attention_keys(tape, p, annotations)?;
    attend_with_keys(tape, p, state, annotations, keys)
}
