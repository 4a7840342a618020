use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{run_lstm, LstmParams};
use super::{check_embeddings, uniform_tensor, Bound, ModelConfig, WEIGHT_INIT_RANGE};
use crate::autodiff::{softmax, Tape, Tensor, Var};
use crate::checkpoint::ModelCheckpoint;
use crate::data::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierVariant {
    /// LSTM over the sentence, final state into a linear head.
    Rnn,
    /// Convolutions of several widths, max-over-time pooled.
    Cnn,
    /// Deep averaging network.
    Dan,
    /// Sentence-pair model with a shared LSTM encoder.
    Pair,
}

impl ClassifierVariant {
    pub const ALL: [ClassifierVariant; 4] = [
        ClassifierVariant::Rnn,
        ClassifierVariant::Cnn,
        ClassifierVariant::Dan,
        ClassifierVariant::Pair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierVariant::Rnn => "rnn",
            ClassifierVariant::Cnn => "cnn",
            ClassifierVariant::Dan => "dan",
            ClassifierVariant::Pair => "pair",
        }
    }
}

impl std::str::FromStr for ClassifierVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Contract(format!("unknown classifier variant `{s}`")))
    }
}

/// How the pair model merges the two sentence encodings `u` and `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PairCombiner {
    /// `[u; v]`
    Concat,
    /// `[u; v; |u − v|; u ⊙ v]`
    #[default]
    Rich,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub variant: ClassifierVariant,
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// LSTM width (RNN, PAIR) or feedforward width (DAN, PAIR combiner).
    pub hidden: usize,
    pub num_classes: usize,
    pub filter_widths: Vec<usize>,
    pub num_filters: usize,
    /// Fraction of tokens the DAN drops while training.
    pub word_dropout: f64,
    pub combiner: PairCombiner,
}

impl ClassifierConfig {
    pub fn desk(variant: ClassifierVariant, vocab_size: usize, num_classes: usize) -> Self {
        ClassifierConfig {
            variant,
            vocab_size,
            embed_dim: 100,
            hidden: 64,
            num_classes,
            filter_widths: vec![3, 4, 5],
            num_filters: 100,
            word_dropout: 0.3,
            combiner: PairCombiner::default(),
        }
    }

    /// Small dimensions for tests.
    pub fn tiny(variant: ClassifierVariant, vocab_size: usize, num_classes: usize) -> Self {
        ClassifierConfig {
            embed_dim: 6,
            hidden: 5,
            num_filters: 4,
            ..Self::desk(variant, vocab_size, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::DegenerateData(format!(
                "a classifier needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if [self.vocab_size, self.embed_dim, self.hidden].contains(&0) {
            return Err(Error::Contract("classifier dimensions must be positive".into()));
        }
        if self.variant == ClassifierVariant::Cnn
            && (self.filter_widths.is_empty() || self.filter_widths.contains(&0) || self.num_filters == 0)
        {
            return Err(Error::Contract("CNN needs positive filter widths and counts".into()));
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(Error::Contract(format!("word dropout {} outside [0, 1)", self.word_dropout)));
        }
        Ok(())
    }

    fn max_width(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(1)
    }

    fn features(&self) -> usize {
        match self.variant {
            ClassifierVariant::Rnn | ClassifierVariant::Dan | ClassifierVariant::Pair => self.hidden,
            ClassifierVariant::Cnn => self.num_filters * self.filter_widths.len(),
        }
    }

    fn combined_width(&self) -> usize {
        match self.combiner {
            PairCombiner::Concat => 2 * self.hidden,
            PairCombiner::Rich => 4 * self.hidden,
        }
    }
}

fn add_linear<R: Rng + ?Sized>(ckpt: &mut ModelCheckpoint, prefix: &str, input: usize, output: usize, rng: &mut R) {
    ckpt.insert(format!("{prefix}.w"), uniform_tensor(&[output, input], WEIGHT_INIT_RANGE, rng), false);
    ckpt.insert(format!("{prefix}.b"), Tensor::zeros(&[output]), false);
}

/// Fresh classifier parameters, all trainable.
pub fn init_classifier<R: Rng + ?Sized>(
    cfg: &ClassifierConfig,
    vocab_hash: &str,
    embeddings: Option<&EmbeddingTable>,
    rng: &mut R,
) -> Result<ModelCheckpoint> {
    cfg.validate()?;
    let mut ck = ModelCheckpoint::new(ModelConfig::Classifier(cfg.clone()), vocab_hash);
    let table = match embeddings {
        Some(t) => {
            check_embeddings(t, cfg.vocab_size, cfg.embed_dim)?;
            t.clone()
        }
        None => EmbeddingTable::random(cfg.vocab_size, cfg.embed_dim, rng),
    };
    ck.insert("clf.emb", table.matrix, false);
    match cfg.variant {
        ClassifierVariant::Rnn => LstmParams::init(&mut ck, "clf.lstm", cfg.embed_dim, cfg.hidden, rng),
        ClassifierVariant::Cnn => {
            for &w in &cfg.filter_widths {
                add_linear(&mut ck, &format!("clf.conv{w}"), w * cfg.embed_dim, cfg.num_filters, rng);
            }
        }
        ClassifierVariant::Dan => {
            add_linear(&mut ck, "clf.ff1", cfg.embed_dim, cfg.hidden, rng);
            add_linear(&mut ck, "clf.ff2", cfg.hidden, cfg.hidden, rng);
        }
        ClassifierVariant::Pair => {
            LstmParams::init(&mut ck, "clf.lstm", cfg.embed_dim, cfg.hidden, rng);
            add_linear(&mut ck, "clf.comb", cfg.combined_width(), cfg.hidden, rng);
        }
    }
    add_linear(&mut ck, "clf.head", cfg.features(), cfg.num_classes, rng);
    Ok(ck)
}

/// Classifier parameters bound on one tape.
#[derive(Debug, Clone)]
pub struct ClassifierParams {
    pub cfg: ClassifierConfig,
    pub emb: Var,
    pub lstm: Option<LstmParams>,
    /// `(width, weights, bias)` per filter bank.
    pub convs: Vec<(usize, Var, Var)>,
    /// Feedforward layers `(w, b)`: DAN's two layers or the pair combiner.
    pub hidden_layers: Vec<(Var, Var)>,
    pub head: (Var, Var),
}

impl ClassifierParams {
    pub fn bind(tape: &Tape, bound: &Bound, cfg: &ClassifierConfig) -> Result<Self> {
        let linear = |p: &str| -> Result<(Var, Var)> { Ok((bound.var(&format!("{p}.w"))?, bound.var(&format!("{p}.b"))?)) };
        let lstm = match cfg.variant {
            ClassifierVariant::Rnn | ClassifierVariant::Pair => Some(LstmParams::bind(bound, tape, "clf.lstm")?),
            _ => None,
        };
        let convs = match cfg.variant {
            ClassifierVariant::Cnn => cfg
                .filter_widths
                .iter()
                .map(|&w| linear(&format!("clf.conv{w}")).map(|(a, b)| (w, a, b)))
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        let hidden_layers = match cfg.variant {
            ClassifierVariant::Dan => vec![linear("clf.ff1")?, linear("clf.ff2")?],
            ClassifierVariant::Pair => vec![linear("clf.comb")?],
            _ => Vec::new(),
        };
        Ok(ClassifierParams {
            cfg: cfg.clone(),
            emb: bound.var("clf.emb")?,
            lstm,
            convs,
            hidden_layers,
            head: linear("clf.head")?,
        })
    }
}

/// Embedded sentence(s) handed to [`classify`], each `[T × d]`.
#[derive(Debug, Clone, Copy)]
pub enum ClassifierInput {
    Single(Var),
    Pair(Var, Var),
}

/// Row lookup of `ids` in the classifier's own embedding table.
pub fn embed_ids(tape: &mut Tape, p: &ClassifierParams, ids: &[usize]) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::Empty("cannot classify an empty sequence".into()));
    }
    tape.embedding_gather(p.emb, ids)
}

fn final_state(tape: &mut Tape, p: &ClassifierParams, x: Var) -> Result<Var> {
    let lstm = p.lstm.as_ref().expect("bound for recurrent variants");
    let states = run_lstm(tape, lstm, x, false)?;
    Ok(*states.last().expect("at least one step"))
}

fn dense_tanh(tape: &mut Tape, x: Var, (w, b): (Var, Var)) -> Result<Var> {
    let z = tape.affine(x, w, Some(b))?;
    Ok(tape.tanh(z))
}

fn pad_rows(tape: &mut Tape, x: Var, rows: usize) -> Result<Var> {
    let (t, d) = (tape.shape(x)[0], tape.shape(x)[1]);
    if t >= rows {
        return Ok(x);
    }
    let mut parts = (0..t).map(|i| tape.row(x, i)).collect::<Result<Vec<_>>>()?;
    let zero = tape.constant(Tensor::zeros(&[d]));
    parts.resize(rows, zero);
    tape.stack_rows(&parts)
}

/// Class logits for one input.
pub fn classify(tape: &mut Tape, p: &ClassifierParams, input: ClassifierInput) -> Result<Var> {
    let features = match (p.cfg.variant, input) {
        (ClassifierVariant::Pair, ClassifierInput::Pair(a, b)) => {
            let u = final_state(tape, p, a)?;
            let v = final_state(tape, p, b)?;
            let joined = match p.cfg.combiner {
                PairCombiner::Concat => tape.concat(&[u, v])?,
                PairCombiner::Rich => {
                    let diff = tape.sub(u, v)?;
                    let diff = tape.abs(diff);
                    let prod = tape.mul(u, v)?;
                    tape.concat(&[u, v, diff, prod])?
                }
            };
            dense_tanh(tape, joined, p.hidden_layers[0])?
        }
        (ClassifierVariant::Pair, ClassifierInput::Single(_)) => {
            return Err(Error::Contract("the pair classifier needs two sentences".into()))
        }
        (_, ClassifierInput::Pair(..)) => {
            return Err(Error::Contract("single-sentence classifier given a pair".into()))
        }
        (ClassifierVariant::Rnn, ClassifierInput::Single(x)) => final_state(tape, p, x)?,
        (ClassifierVariant::Cnn, ClassifierInput::Single(x)) => {
            let x = pad_rows(tape, x, p.cfg.max_width())?;
            let mut pooled = Vec::with_capacity(p.convs.len());
            for &(width, w, b) in &p.convs {
                let maps = tape.conv1d(x, w, b, width)?;
                let maps = tape.tanh(maps);
                pooled.push(tape.max_over_time(maps)?);
            }
            tape.concat(&pooled)?
        }
        (ClassifierVariant::Dan, ClassifierInput::Single(x)) => {
            let avg = tape.mean_rows(x)?;
            let h = dense_tanh(tape, avg, p.hidden_layers[0])?;
            dense_tanh(tape, h, p.hidden_layers[1])?
        }
    };
    tape.affine(features, p.head.0, Some(p.head.1))
}

/// Class probabilities for token ids under a checkpoint, without dropout.
pub fn predict(ckpt: &ModelCheckpoint, first: &[usize], second: Option<&[usize]>) -> Result<Vec<f64>> {
    let cfg = ckpt.model.as_classifier()?;
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, ckpt, false);
    let p = ClassifierParams::bind(&tape, &bound, cfg)?;
    let a = embed_ids(&mut tape, &p, first)?;
    let input = match second {
        Some(ids) => ClassifierInput::Pair(a, embed_ids(&mut tape, &p, ids)?),
        None => ClassifierInput::Single(a),
    };
    let logits = classify(&mut tape, &p, input)?;
    Ok(softmax(tape.value(logits).data()))
}

/// Drops each id independently with probability `rate`, keeping at least
/// one (a uniformly chosen survivor when all would be dropped).
pub fn word_dropout_ids<R: Rng + ?Sized>(ids: &[usize], rate: f64, rng: &mut R) -> Vec<usize> {
    if rate <= 0.0 || ids.is_empty() {
        return ids.to_vec();
    }
    let kept: Vec<usize> = ids.iter().copied().filter(|_| rng.gen::<f64>() >= rate).collect();
    if kept.is_empty() {
        vec![ids[rng.gen_range(0..ids.len())]]
    } else {
        kept
    }
}
