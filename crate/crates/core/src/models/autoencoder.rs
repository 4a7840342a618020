use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attend_with_keys, attention_keys, AttentionParams};
use super::lstm::{lstm_step, run_lstm, LstmParams};
use super::{check_embeddings, uniform_tensor, Bound, ModelConfig, WEIGHT_INIT_RANGE};
use crate::autodiff::{Tape, Tensor, Var};
use crate::checkpoint::ModelCheckpoint;
use crate::data::{EmbeddingTable, BOS, EOS};
use crate::error::{Error, Result};
use crate::relax::{sample_step, GumbelSample, Noise};

/// Parameter-name prefixes of the decoder side (LSTM, attention, output
/// projection). Everything else is encoder or embedding.
pub const DECODER_PREFIXES: &[&str] = &["dec.", "att.", "out."];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Per-direction encoder width; annotations are twice this.
    pub enc_hidden: usize,
    /// Must equal `2 × enc_hidden`: the max-pooled annotations seed the decoder directly.
    pub dec_hidden: usize,
    pub attn_dim: usize,
    pub max_len: usize,
}

impl AutoencoderConfig {
    /// Desk-scale dimensions: 100-d embeddings, 32-wide encoder, 64-wide decoder.
    pub fn desk(vocab_size: usize) -> Self {
        AutoencoderConfig {
            vocab_size,
            embed_dim: 100,
            enc_hidden: 32,
            dec_hidden: 64,
            attn_dim: 64,
            max_len: 64,
        }
    }

    /// Small dimensions for gradient checks and unit tests.
    pub fn tiny(vocab_size: usize) -> Self {
        AutoencoderConfig {
            vocab_size,
            embed_dim: 4,
            enc_hidden: 3,
            dec_hidden: 6,
            attn_dim: 5,
            max_len: 16,
        }
    }

    /// 100-d embeddings, 512-wide bidirectional encoder, 1024-wide decoder.
    pub fn full_scale(vocab_size: usize) -> Self {
        AutoencoderConfig {
            vocab_size,
            embed_dim: 100,
            enc_hidden: 512,
            dec_hidden: 1024,
            attn_dim: 1024,
            max_len: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dec_hidden != 2 * self.enc_hidden {
            return Err(Error::Contract(format!(
                "decoder width {} must be twice the encoder width {}",
                self.dec_hidden, self.enc_hidden
            )));
        }
        if [self.vocab_size, self.embed_dim, self.enc_hidden, self.attn_dim, self.max_len].contains(&0) {
            return Err(Error::Contract("autoencoder dimensions must be positive".into()));
        }
        Ok(())
    }

    fn annotation_dim(&self) -> usize {
        2 * self.enc_hidden
    }
}

/// Fresh autoencoder parameters. All tensors start trainable.
pub fn init_autoencoder<R: Rng + ?Sized>(
    cfg: &AutoencoderConfig,
    vocab_hash: &str,
    embeddings: Option<&EmbeddingTable>,
    rng: &mut R,
) -> Result<ModelCheckpoint> {
    cfg.validate()?;
    let mut ck = ModelCheckpoint::new(ModelConfig::Autoencoder(cfg.clone()), vocab_hash);
    let table = match embeddings {
        Some(t) => {
            check_embeddings(t, cfg.vocab_size, cfg.embed_dim)?;
            t.clone()
        }
        None => EmbeddingTable::random(cfg.vocab_size, cfg.embed_dim, rng),
    };
    ck.insert("ae.emb", table.matrix, false);
    LstmParams::init(&mut ck, "enc.fwd", cfg.embed_dim, cfg.enc_hidden, rng);
    LstmParams::init(&mut ck, "enc.bwd", cfg.embed_dim, cfg.enc_hidden, rng);
    let ann = cfg.annotation_dim();
    AttentionParams::init(&mut ck, "att", cfg.dec_hidden, ann, cfg.attn_dim, rng);
    LstmParams::init(&mut ck, "dec.lstm", cfg.embed_dim + ann, cfg.dec_hidden, rng);
    ck.insert(
        "out.w",
        uniform_tensor(&[cfg.vocab_size, cfg.dec_hidden + ann], WEIGHT_INIT_RANGE, rng),
        false,
    );
    ck.insert("out.b", Tensor::zeros(&[cfg.vocab_size]), false);
    Ok(ck)
}

/// Autoencoder parameters bound on one tape.
#[derive(Debug, Clone)]
pub struct AeParams {
    pub cfg: AutoencoderConfig,
    pub emb: Var,
    pub enc_fwd: LstmParams,
    pub enc_bwd: LstmParams,
    pub att: AttentionParams,
    pub dec: LstmParams,
    pub out_w: Var,
    pub out_b: Var,
}

impl AeParams {
    pub fn bind(tape: &Tape, bound: &Bound, cfg: &AutoencoderConfig) -> Result<Self> {
        Ok(AeParams {
            cfg: cfg.clone(),
            emb: bound.var("ae.emb")?,
            enc_fwd: LstmParams::bind(bound, tape, "enc.fwd")?,
            enc_bwd: LstmParams::bind(bound, tape, "enc.bwd")?,
            att: AttentionParams::bind(bound, "att")?,
            dec: LstmParams::bind(bound, tape, "dec.lstm")?,
            out_w: bound.var("out.w")?,
            out_b: bound.var("out.b")?,
        })
    }
}

/// Encoder output for one sentence.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `[T × 2·enc_hidden]` forward/backward states side by side.
    pub annotations: Var,
    /// Column-wise max of the annotations; the decoder's initial hidden state.
    pub init_state: Var,
    /// Attention-projected annotations.
    pub keys: Var,
}

pub fn encode(tape: &mut Tape, p: &AeParams, tokens: &[usize]) -> Result<Encoded> {
    if tokens.is_empty() {
        return Err(Error::Empty("cannot encode an empty sequence".into()));
    }
    if tokens.len() > p.cfg.max_len {
        return Err(Error::Contract(format!(
            "sequence of {} tokens exceeds max_len {}",
            tokens.len(),
            p.cfg.max_len
        )));
    }
    let x = tape.embedding_gather(p.emb, tokens)?;
    let fwd = run_lstm(tape, &p.enc_fwd, x, false)?;
    let bwd = run_lstm(tape, &p.enc_bwd, x, true)?;
    let rows = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| tape.concat(&[f, b]))
        .collect::<Result<Vec<_>>>()?;
    let annotations = tape.stack_rows(&rows)?;
    let init_state = tape.max_over_time(annotations)?;
    let keys = attention_keys(tape, &p.att, annotations)?;
    Ok(Encoded {
        annotations,
        init_state,
        keys,
    })
}

struct DecoderState {
    h: Var,
    c: Var,
}

impl DecoderState {
    fn start(tape: &mut Tape, p: &AeParams, enc: &Encoded) -> Self {
        DecoderState {
            h: enc.init_state,
            c: tape.constant(Tensor::zeros(&[p.cfg.dec_hidden])),
        }
    }

    /// Consumes the previous token's embedding and returns next-token logits.
    fn step(&mut self, tape: &mut Tape, p: &AeParams, enc: &Encoded, prev: Var) -> Result<Var> {
        let (ctx, _) = attend_with_keys(tape, &p.att, self.h, enc.annotations, enc.keys)?;
        let input = tape.concat(&[prev, ctx])?;
        let (h, c) = lstm_step(tape, &p.dec, input, self.h, self.c)?;
        self.h = h;
        self.c = c;
        let features = tape.concat(&[h, ctx])?;
        tape.affine(features, p.out_w, Some(p.out_b))
    }
}

fn embed_one(tape: &mut Tape, p: &AeParams, id: usize) -> Result<Var> {
    let row = tape.embedding_gather(p.emb, &[id])?;
    tape.reshape(row, &[p.cfg.embed_dim])
}

/// Reconstruction logits under teacher forcing.
#[derive(Debug, Clone)]
pub struct TeacherForced {
    /// `[(T + 1) × V]`: one row per target token, the last one predicting EOS.
    pub logits: Var,
    /// `tokens` followed by EOS.
    pub targets: Vec<usize>,
}

impl TeacherForced {
    pub fn log_probs(&self, tape: &mut Tape) -> Result<Var> {
        tape.log_softmax_rows(self.logits)
    }

    pub fn loss(&self, tape: &mut Tape) -> Result<Var> {
        tape.cross_entropy_logits(self.logits, &self.targets)
    }

    /// `(correct, total)` argmax predictions against the targets.
    pub fn accuracy_counts(&self, tape: &Tape) -> (usize, usize) {
        let logits = tape.value(self.logits);
        let correct = self
            .targets
            .iter()
            .enumerate()
            .filter(|(r, &t)| crate::autodiff::argmax(logits.row(*r)) == t)
            .count();
        (correct, self.targets.len())
    }
}

/// Step `t` reads the gold token `t − 1` (BOS first) and predicts token `t`.
pub fn decode_teacher_forced(tape: &mut Tape, p: &AeParams, enc: &Encoded, tokens: &[usize]) -> Result<TeacherForced> {
    if tokens.len() > p.cfg.max_len {
        return Err(Error::Contract(format!(
            "sequence of {} tokens exceeds max_len {}",
            tokens.len(),
            p.cfg.max_len
        )));
    }
    let inputs: Vec<usize> = std::iter::once(BOS).chain(tokens.iter().copied()).collect();
    let targets: Vec<usize> = tokens.iter().copied().chain(std::iter::once(EOS)).collect();
    let x = tape.embedding_gather(p.emb, &inputs)?;
    let mut state = DecoderState::start(tape, p, enc);
    let mut rows = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let prev = tape.row(x, t)?;
        rows.push(state.step(tape, p, enc, prev)?);
    }
    let logits = tape.stack_rows(&rows)?;
    Ok(TeacherForced { logits, targets })
}

/// Samples with Gumbel-Softmax and straight-through discretization, feeding
/// each discrete sample back through the embedding table. Stops after EOS or
/// `max_len` steps; the EOS sample, if any, is the last element.
pub fn decode_free_running(
    tape: &mut Tape,
    p: &AeParams,
    enc: &Encoded,
    noise: &mut Noise<'_>,
    tau: f64,
    max_len: usize,
) -> Result<Vec<GumbelSample>> {
    if max_len == 0 {
        return Err(Error::Contract("max_len must be at least 1".into()));
    }
    let mut state = DecoderState::start(tape, p, enc);
    let mut prev = embed_one(tape, p, BOS)?;
    let mut samples = Vec::new();
    for _ in 0..max_len {
        let logits = state.step(tape, p, enc, prev)?;
        let log_probs = tape.log_softmax_rows(logits)?;
        let sample = sample_step(tape, log_probs, noise, tau)?;
        let done = sample.index == EOS;
        let row = tape.reshape(sample.s, &[1, p.cfg.vocab_size])?;
        let e = tape.matmul(row, p.emb)?;
        prev = tape.reshape(e, &[p.cfg.embed_dim])?;
        samples.push(sample);
        if done {
            break;
        }
    }
    Ok(samples)
}

/// Argmax decoding without noise. Returns the tokens before EOS.
pub fn greedy_decode(ckpt: &ModelCheckpoint, tokens: &[usize], max_len: usize) -> Result<Vec<usize>> {
    let cfg = ckpt.model.as_autoencoder()?;
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, ckpt, false);
    let p = AeParams::bind(&tape, &bound, cfg)?;
    let enc = encode(&mut tape, &p, tokens)?;
    let mut state = DecoderState::start(&mut tape, &p, &enc);
    let mut prev = embed_one(&mut tape, &p, BOS)?;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let logits = state.step(&mut tape, &p, &enc, prev)?;
        let id = tape.value(logits).argmax();
        if id == EOS {
            break;
        }
        out.push(id);
        prev = embed_one(&mut tape, &p, id)?;
    }
    Ok(out)
}
