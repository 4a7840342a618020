//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion on stdout and exits non-zero if any fails. Progress goes to
//! stderr.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use sift_core::analysis::{
    fool_rate, pmi_ranking, pos_change_table, sentiment_shift, sift_term_ranking, token_overlap, weighted_kendall_tau,
    RankedTermList, RuleTagger, SentimentEntry, SentimentLexicon, TermSource, DEFAULT_PMI_SMOOTHING,
};
use sift_core::autodiff::{check_gradients, log_softmax, Tape, Tensor, Var};
use sift_core::checkpoint::ModelCheckpoint;
use sift_core::data::{
    generate_synthetic, Example, LabeledDataset, Split, SyntheticData, SyntheticSpec, Vocabulary, DEFAULT_MAX_VOCAB,
};
use sift_core::models::{
    attend, classify, embed_ids, init_classifier, lstm_step, AttentionParams, AutoencoderConfig, Bound,
    ClassifierConfig, ClassifierInput, ClassifierParams, ClassifierVariant, LstmParams, PairCombiner,
};
use sift_core::pipeline::{
    classifier_accuracy, finetune_with_flip, generate_reconstructions, is_decoder_param,
    pretrain_autoencoder_unchecked, similarity_penalty, token_accuracy, train_classifier, heldout_split, Phase,
    TrainingConfig,
};
use sift_core::relax::{gumbel_softmax, sample_gumbel, sample_step, straight_through, Noise, DEFAULT_TAU};

type CoreResult<T> = sift_core::Result<T>;
type Program = Box<dyn Fn(&mut Tape, &[Var]) -> CoreResult<Var>>;

const TRIALS: usize = 100;
const GRAD_TOL: f64 = 1e-4;
const SEED: u64 = 7;
/// Fine-tuning learning rate for the desk-scale runs.
const FINETUNE_LR: f64 = 1e-3;
const FINETUNE_EPOCHS: usize = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn run(id: u8, title: &str, f: impl FnOnce() -> Verdict) -> (u8, String, Verdict, Duration) {
    eprintln!("criterion {id}: {title} ...");
    let t = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Verdict::new(false, format!("panicked: {msg}"))
    });
    let elapsed = t.elapsed();
    eprintln!("criterion {id}: {} in {:.1}s", if v.pass { "pass" } else { "FAIL" }, elapsed.as_secs_f64());
    (id, title.to_string(), v, elapsed)
}

// ---------------------------------------------------------------- helpers

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// `Σ y ⊙ W` with a fixed pseudo-random `W` derived from `seed`.
fn project(t: &mut Tape, y: Var, seed: u64) -> CoreResult<Var> {
    let shape = t.shape(y).to_vec();
    let w = uniform(&mut ChaCha8Rng::seed_from_u64(seed), &shape, -1.0, 1.0);
    let w = t.constant(w);
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

fn tensor_sha(t: &Tensor) -> String {
    let mut h = Sha256::new();
    for s in t.shape() {
        h.update((*s as u64).to_le_bytes());
    }
    for v in t.data() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn checkpoint_hashes(c: &ModelCheckpoint, keep: impl Fn(&str) -> bool) -> BTreeMap<String, String> {
    c.params()
        .filter(|(n, _)| keep(n))
        .map(|(n, p)| (n.clone(), tensor_sha(&p.value)))
        .collect()
}

// ------------------------------------------------------ criterion 1 cases

fn primitive_case(name: &str, rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Program) {
    let r = rng.gen_range(1..5);
    let c = rng.gen_range(1..6);
    let seed: u64 = rng.gen();
    let m = |rng: &mut ChaCha8Rng| uniform(rng, &[r, c], -2.0, 2.0);
    let v = |rng: &mut ChaCha8Rng, n: usize| uniform(rng, &[n], -2.0, 2.0);
    match name {
        "add" | "sub" | "mul" => {
            let name = name.to_string();
            (
                vec![m(rng), m(rng)],
                Box::new(move |t, x| {
                    let y = match name.as_str() {
                        "add" => t.add(x[0], x[1])?,
                        "sub" => t.sub(x[0], x[1])?,
                        _ => t.mul(x[0], x[1])?,
                    };
                    project(t, y, seed)
                }),
            )
        }
        "scale" => {
            let k = rng.gen_range(-3.0..3.0);
            (vec![m(rng)], Box::new(move |t, x| {
                let y = t.scale(x[0], k);
                project(t, y, seed)
            }))
        }
        "add_scalar" => {
            let k = rng.gen_range(-3.0..3.0);
            (vec![m(rng)], Box::new(move |t, x| {
                let y = t.add_scalar(x[0], k);
                project(t, y, seed)
            }))
        }
        "sigmoid" => (vec![m(rng)], Box::new(move |t, x| {
            let y = t.sigmoid(x[0]);
            project(t, y, seed)
        })),
        "tanh" => (vec![m(rng)], Box::new(move |t, x| {
            let y = t.tanh(x[0]);
            project(t, y, seed)
        })),
        "exp" => (vec![m(rng)], Box::new(move |t, x| {
            let y = t.exp(x[0]);
            project(t, y, seed)
        })),
        "log" => (vec![uniform(rng, &[r, c], 0.5, 3.0)], Box::new(move |t, x| {
            let y = t.log(x[0])?;
            project(t, y, seed)
        })),
        "abs" => {
            let data: Vec<f64> = (0..r * c)
                .map(|_| rng.gen_range(0.1..2.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            (vec![Tensor::new(vec![r, c], data).unwrap()], Box::new(move |t, x| {
                let y = t.abs(x[0]);
                project(t, y, seed)
            }))
        }
        "add_row_broadcast" => (vec![m(rng), v(rng, c)], Box::new(move |t, x| {
            let y = t.add_row_broadcast(x[0], x[1])?;
            project(t, y, seed)
        })),
        "matmul" => {
            let k = rng.gen_range(1..5);
            (
                vec![uniform(rng, &[r, k], -2.0, 2.0), uniform(rng, &[k, c], -2.0, 2.0)],
                Box::new(move |t, x| {
                    let y = t.matmul(x[0], x[1])?;
                    project(t, y, seed)
                }),
            )
        }
        "affine" => {
            let k = rng.gen_range(1..5);
            let x0 = if rng.gen::<bool>() { v(rng, k) } else { uniform(rng, &[r, k], -2.0, 2.0) };
            (
                vec![x0, uniform(rng, &[c, k], -2.0, 2.0), v(rng, c)],
                Box::new(move |t, x| {
                    let y = t.affine(x[0], x[1], Some(x[2]))?;
                    project(t, y, seed)
                }),
            )
        }
        "sum" => (vec![m(rng)], Box::new(|t, x| Ok(t.sum(x[0])))),
        "mean" => (vec![m(rng)], Box::new(|t, x| Ok(t.mean(x[0])))),
        "mean_rows" => (vec![m(rng)], Box::new(move |t, x| {
            let y = t.mean_rows(x[0])?;
            project(t, y, seed)
        })),
        "concat" => {
            let parts: Vec<Tensor> = (0..rng.gen_range(1..4)).map(|_| {
                let n = rng.gen_range(1..5);
                v(rng, n)
            }).collect();
            (parts, Box::new(move |t, x| {
                let y = t.concat(x)?;
                project(t, y, seed)
            }))
        }
        "stack_rows" => {
            let parts: Vec<Tensor> = (0..r).map(|_| v(rng, c)).collect();
            (parts, Box::new(move |t, x| {
                let y = t.stack_rows(x)?;
                project(t, y, seed)
            }))
        }
        "row" => {
            let i = rng.gen_range(0..r);
            (vec![m(rng)], Box::new(move |t, x| {
                let y = t.row(x[0], i)?;
                project(t, y, seed)
            }))
        }
        "slice" => {
            let n = rng.gen_range(2..8);
            let start = rng.gen_range(0..n);
            let len = rng.gen_range(1..=n - start);
            (vec![v(rng, n)], Box::new(move |t, x| {
                let y = t.slice(x[0], start, len)?;
                project(t, y, seed)
            }))
        }
        "reshape" => (vec![m(rng)], Box::new(move |t, x| {
            let y = t.reshape(x[0], &[c, r])?;
            project(t, y, seed)
        })),
        "softmax_rows" => (vec![m(rng)], Box::new(move |t, x| {
            let y = t.softmax_rows(x[0])?;
            project(t, y, seed)
        })),
        "log_softmax_rows" => (vec![m(rng)], Box::new(move |t, x| {
            let y = t.log_softmax_rows(x[0])?;
            project(t, y, seed)
        })),
        "cross_entropy_logits" => {
            let targets: Vec<usize> = (0..r).map(|_| rng.gen_range(0..c)).collect();
            (vec![m(rng)], Box::new(move |t, x| t.cross_entropy_logits(x[0], &targets)))
        }
        "max_over_time" => (vec![m(rng)], Box::new(move |t, x| {
            let y = t.max_over_time(x[0])?;
            project(t, y, seed)
        })),
        "cosine_similarity" => {
            let n = rng.gen_range(1..6);
            (vec![v(rng, n), v(rng, n)], Box::new(|t, x| t.cosine_similarity(x[0], x[1])))
        }
        "embedding_gather" => {
            let vocab = rng.gen_range(2..7);
            let ids: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..vocab)).collect();
            (vec![uniform(rng, &[vocab, c], -2.0, 2.0)], Box::new(move |t, x| {
                let y = t.embedding_gather(x[0], &ids)?;
                project(t, y, seed)
            }))
        }
        "conv1d" => {
            let width = rng.gen_range(1..4);
            let steps = rng.gen_range(width..width + 4);
            let filters = rng.gen_range(1..4);
            (
                vec![
                    uniform(rng, &[steps, c], -2.0, 2.0),
                    uniform(rng, &[filters, width * c], -1.0, 1.0),
                    v(rng, filters),
                ],
                Box::new(move |t, x| {
                    let y = t.conv1d(x[0], x[1], x[2], width)?;
                    project(t, y, seed)
                }),
            )
        }
        "dropout_with_mask" => {
            let keep = 1.0 / 0.7;
            let mask: Vec<f64> = (0..r * c).map(|_| if rng.gen::<f64>() < 0.3 { 0.0 } else { keep }).collect();
            (vec![m(rng)], Box::new(move |t, x| {
                let y = t.dropout_with_mask(x[0], &mask)?;
                project(t, y, seed)
            }))
        }
        other => panic!("no case for {other}"),
    }
}

const PRIMITIVES: &[&str] = &[
    "add", "sub", "mul", "scale", "add_scalar", "sigmoid", "tanh", "exp", "log", "abs", "add_row_broadcast", "matmul",
    "affine", "sum", "mean", "mean_rows", "concat", "stack_rows", "row", "slice", "reshape", "softmax_rows",
    "log_softmax_rows", "cross_entropy_logits", "max_over_time", "cosine_similarity", "embedding_gather", "conv1d",
    "dropout_with_mask",
];

fn lstm_case(rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Program) {
    let input = rng.gen_range(1..5);
    let hidden = rng.gen_range(1..5);
    let seed: u64 = rng.gen();
    (
        vec![
            uniform(rng, &[input], -1.0, 1.0),
            uniform(rng, &[hidden], -1.0, 1.0),
            uniform(rng, &[hidden], -1.0, 1.0),
            uniform(rng, &[4 * hidden, input + hidden], -0.8, 0.8),
            uniform(rng, &[4 * hidden], -0.5, 0.5),
        ],
        Box::new(move |t, x| {
            let p = LstmParams {
                w: x[3],
                b: x[4],
                hidden,
            };
            let (h, c) = lstm_step(t, &p, x[0], x[1], x[2])?;
            let a = project(t, h, seed)?;
            let b = project(t, c, seed.wrapping_add(1))?;
            t.add(a, b)
        }),
    )
}

fn attention_case(rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Program) {
    let (state, ann, dim) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
    let steps = rng.gen_range(1..6);
    let seed: u64 = rng.gen();
    (
        vec![
            uniform(rng, &[state], -1.0, 1.0),
            uniform(rng, &[steps, ann], -1.0, 1.0),
            uniform(rng, &[dim, state], -1.0, 1.0),
            uniform(rng, &[dim, ann], -1.0, 1.0),
            uniform(rng, &[dim], -0.5, 0.5),
            uniform(rng, &[1, dim], -1.0, 1.0),
        ],
        Box::new(move |t, x| {
            let p = AttentionParams {
                w_dec: x[2],
                w_enc: x[3],
                b: x[4],
                v: x[5],
            };
            let (ctx, weights) = attend(t, &p, x[0], x[1])?;
            let a = project(t, ctx, seed)?;
            let b = project(t, weights, seed.wrapping_add(1))?;
            t.add(a, b)
        }),
    )
}

fn classifier_case(variant: ClassifierVariant, trial: usize, rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Program) {
    let vocab = 12;
    let mut cfg = ClassifierConfig::tiny(variant, vocab, 3);
    if variant == ClassifierVariant::Pair && trial % 2 == 1 {
        cfg.combiner = PairCombiner::Concat;
    }
    let ckpt = init_classifier(&cfg, "h", None, rng).unwrap();
    let names: Vec<String> = ckpt.names().cloned().collect();
    // Larger weights than the init range so every path carries signal.
    let inputs: Vec<Tensor> = names
        .iter()
        .map(|n| {
            let shape = ckpt.tensor(n).unwrap().shape().to_vec();
            uniform(rng, &shape, -0.5, 0.5)
        })
        .collect();
    let ids = |rng: &mut ChaCha8Rng| -> Vec<usize> { (0..rng.gen_range(1..8)).map(|_| rng.gen_range(0..vocab)).collect() };
    let first = ids(rng);
    let second = ids(rng);
    let label = rng.gen_range(0..3);
    (
        inputs,
        Box::new(move |t, x| {
            let bound = Bound::from_vars(names.iter().cloned().zip(x.iter().copied()).collect());
            let p = ClassifierParams::bind(t, &bound, &cfg)?;
            let a = embed_ids(t, &p, &first)?;
            let input = if cfg.variant == ClassifierVariant::Pair {
                ClassifierInput::Pair(a, embed_ids(t, &p, &second)?)
            } else {
                ClassifierInput::Single(a)
            };
            let logits = classify(t, &p, input)?;
            t.cross_entropy_logits(logits, &[label])
        }),
    )
}

fn similarity_case(rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Program) {
    let (vocab, dim) = (rng.gen_range(3..9), rng.gen_range(1..6));
    let original: Vec<usize> = (0..rng.gen_range(1..7)).map(|_| rng.gen_range(0..vocab)).collect();
    let rows = rng.gen_range(1..7);
    (
        vec![uniform(rng, &[vocab, dim], -1.0, 1.0), uniform(rng, &[rows, vocab], 0.0, 1.0)],
        Box::new(move |t, x| similarity_penalty(t, x[0], &original, x[1])),
    )
}

fn gumbel_softmax_case(rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Program) {
    let n = rng.gen_range(2..9);
    let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let g = sample_gumbel(n, rng);
    let tau = rng.gen_range(0.5..2.0);
    let seed: u64 = rng.gen();
    (
        vec![Tensor::vector(log_softmax(&logits))],
        Box::new(move |t, x| {
            let y = gumbel_softmax(t, x[0], &g, tau)?;
            project(t, y, seed)
        }),
    )
}

fn criterion_gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut check = |name: String, make: &mut dyn FnMut(usize, &mut ChaCha8Rng) -> (Vec<Tensor>, Program)| {
        let mut w = 0.0f64;
        for trial in 0..TRIALS {
            let (inputs, program) = make(trial, &mut rng);
            let err = check_gradients(program, &inputs).unwrap_or(f64::INFINITY);
            w = w.max(err);
        }
        worst.push((name, w));
    };
    for &p in PRIMITIVES {
        check(p.to_string(), &mut |_, rng| primitive_case(p, rng));
    }
    check("lstm_step".into(), &mut |_, rng| lstm_case(rng));
    check("attention".into(), &mut |_, rng| attention_case(rng));
    for v in ClassifierVariant::ALL {
        check(format!("classifier_{}", v.name()), &mut |trial, rng| classifier_case(v, trial, rng));
    }
    check("similarity_penalty".into(), &mut |_, rng| similarity_case(rng));
    check("gumbel_softmax".into(), &mut |_, rng| gumbel_softmax_case(rng));

    let failing: Vec<String> = worst
        .iter()
        .filter(|(_, e)| !(*e <= GRAD_TOL))
        .map(|(n, e)| format!("{n}={e:.2e}"))
        .collect();
    let max = worst.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Verdict::new(
        failing.is_empty(),
        format!(
            "{} programs x {TRIALS} trials, max rel err {max:.2e} (tol {GRAD_TOL:.0e}){}",
            worst.len(),
            if failing.is_empty() { String::new() } else { format!("; over tol: {}", failing.join(", ")) }
        ),
    )
}

// ------------------------------------------------------- criteria 2 and 3

fn criterion_gumbel_max() -> Verdict {
    let probs = [0.1, 0.2, 0.3, 0.4];
    let n = 50_000;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let mut t = Tape::new();
        let lp = t.constant(Tensor::vector(probs.iter().map(|p: &f64| p.ln()).collect()));
        let s = sample_step(&mut t, lp, &mut Noise::Gumbel(&mut rng), DEFAULT_TAU).unwrap();
        counts[s.index] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let dev = freqs.iter().zip(probs).map(|(f, p)| (f - p).abs()).fold(0.0, f64::max);
    Verdict::new(dev <= 0.01, format!("frequencies {freqs:.4?}, max deviation {dev:.4} (tol 0.01)"))
}

fn criterion_straight_through() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut forward_bad, mut backward_bad) = (0, 0);
    for trial in 0..10_000 {
        let n = rng.gen_range(2..40);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let g = sample_gumbel(n, &mut rng);
        let tau = rng.gen_range(0.1..3.0);
        let upstream: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let mut t = Tape::new();
        let lp = t.leaf(Tensor::vector(log_softmax(&logits)), true);
        let y = gumbel_softmax(&mut t, lp, &g, tau).unwrap();
        let s = straight_through(&mut t, y).unwrap();
        let out = t.value(s).data().to_vec();
        let ys = t.value(y).data().to_vec();
        let hot = ys
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > ys[best] { i } else { best });
        let one_hot_ok = out.iter().enumerate().all(|(i, &v)| v == if i == hot { 1.0 } else { 0.0 });
        forward_bad += usize::from(!one_hot_ok);

        let w = t.constant(Tensor::vector(upstream.clone()));
        let p = t.mul(s, w).unwrap();
        let loss = t.sum(p);
        t.backward(loss).unwrap();
        let gy = t.grad(y).unwrap().data().to_vec();
        let mut ok = gy.iter().zip(&upstream).all(|(a, b)| a.to_bits() == b.to_bits());
        if trial < 100 {
            // Full Jacobian, one basis direction at a time.
            for k in 0..n {
                let e = t.constant(Tensor::one_hot(n, k));
                let p = t.mul(s, e).unwrap();
                let l = t.sum(p);
                t.backward(l).unwrap();
                let col = t.grad(y).unwrap().data();
                ok &= col.iter().enumerate().all(|(i, &v)| v == if i == k { 1.0 } else { 0.0 });
            }
        }
        backward_bad += usize::from(!ok);
    }
    Verdict::new(
        forward_bad == 0 && backward_bad == 0,
        format!("10000 relaxations: {forward_bad} non-one-hot forwards, {backward_bad} non-identity backwards"),
    )
}

// ------------------------------------------------------------- criterion 7

fn brute_tau(a: &RankedTermList, b: &RankedTermList, k: usize) -> f64 {
    let top_b: Vec<&str> = b.terms.iter().take(k).map(|(t, _)| t.as_str()).collect();
    let shared: Vec<&str> = a
        .terms
        .iter()
        .take(k)
        .map(|(t, _)| t.as_str())
        .filter(|t| top_b.contains(t))
        .collect();
    let pos_b = |t: &str| top_b.iter().position(|x| *x == t).unwrap() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..shared.len() {
        for j in i + 1..shared.len() {
            let w = 1.0 / (i as f64 + 1.0) + 1.0 / (j as f64 + 1.0);
            let sa = (i as f64 - j as f64).signum();
            let sb = (pos_b(shared[i]) - pos_b(shared[j])).signum();
            num += w * sa * sb;
            den += w;
        }
    }
    num / den
}

fn random_list(rng: &mut ChaCha8Rng, pool: &[String], n: usize) -> RankedTermList {
    let mut terms: Vec<String> = pool.to_vec();
    terms.shuffle(rng);
    terms.truncate(n);
    let scored = terms.into_iter().map(|t| (t, rng.gen_range(-5.0..5.0))).collect();
    RankedTermList::new(TermSource::Pmi, scored)
}

fn criterion_analysis_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let pool: Vec<String> = (0..120).map(|i| format!("w{i}")).collect();
    let mut worst = 0.0f64;
    let mut pairs_done = 0;
    while pairs_done < 50 {
        let (a_pool, a_len) = (rng.gen_range(10..120), rng.gen_range(5..100));
        let a = random_list(&mut rng, &pool[..a_pool], a_len);
        let (b_pool, b_len) = (rng.gen_range(10..120), rng.gen_range(5..100));
        let b = random_list(&mut rng, &pool[..b_pool], b_len);
        let k = [10, 25, 50, 200][rng.gen_range(0..4)];
        let Ok(fast) = weighted_kendall_tau(&a, &b, k) else { continue };
        worst = worst.max((fast - brute_tau(&a, &b, k)).abs());
        pairs_done += 1;
    }
    let list = random_list(&mut rng, &pool, 60);
    let reversed = RankedTermList {
        source: TermSource::Sift,
        terms: list.terms.iter().rev().cloned().collect(),
    };
    let same = weighted_kendall_tau(&list, &list, 100).unwrap();
    let rev = weighted_kendall_tau(&list, &reversed, 100).unwrap();

    let words = ["good", "film", "the", "runs", "in", "boring", "plot", "very", "awful", "actor", "<unk>", "."];
    let sentences: Vec<Vec<String>> = (0..40)
        .map(|_| (0..rng.gen_range(1..12)).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect())
        .collect();
    let identity: Vec<(Vec<String>, Vec<String>)> = sentences.iter().map(|s| (s.clone(), s.clone())).collect();
    let pos = pos_change_table(&identity, &RuleTagger).unwrap();
    let pos_zero = pos.values().all(|d| d.change.is_none_or(|c| c == 0.0));
    let lexicon = SentimentLexicon::new(HashMap::from([
        ("good".to_string(), SentimentEntry { positive: 0.75, negative: 0.0, is_adjective: true }),
        ("boring".to_string(), SentimentEntry { positive: 0.0, negative: 0.625, is_adjective: true }),
        ("awful".to_string(), SentimentEntry { positive: 0.125, negative: 0.875, is_adjective: true }),
        ("film".to_string(), SentimentEntry { positive: 0.25, negative: 0.0, is_adjective: false }),
    ]))
    .unwrap();
    let labels: Vec<String> = (0..identity.len()).map(|i| format!("c{}", i % 2)).collect();
    let shift = sentiment_shift(&identity, &labels, &lexicon).unwrap();
    let sent_zero = std::iter::once(&shift.overall)
        .chain(shift.by_label.values())
        .all(|d| d.positive == 0.0 && d.negative == 0.0);
    let overlap = token_overlap(&identity).unwrap();

    let pass = worst <= 1e-12
        && (same - 1.0).abs() <= 1e-12
        && (rev + 1.0).abs() <= 1e-12
        && pos_zero
        && sent_zero
        && overlap == 100.0;
    Verdict::new(
        pass,
        format!(
            "tau vs brute force max |diff| {worst:.1e} over 50 pairs; identical {same}, reversed {rev}; \
             POS zeros {pos_zero}, sentiment zeros {sent_zero}, identity overlap {overlap}%"
        ),
    )
}

// ---------------------------------------------------- criteria 4, 5, 6, 8

struct Corpus {
    data: SyntheticData,
    vocab: Vocabulary,
    sentences: Vec<Vec<usize>>,
    train: LabeledDataset,
    dev: LabeledDataset,
    test: LabeledDataset,
}

fn corpus() -> Corpus {
    let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let words: Vec<Vec<String>> = data.all().map(|e| e.first.clone()).collect();
    let vocab = Vocabulary::build(words.iter().map(Vec::as_slice), DEFAULT_MAX_VOCAB).unwrap();
    let sentences = words.iter().map(|w| vocab.encode(w)).collect();
    let ds = |part, split| LabeledDataset::from_text(part, data.class_names.clone(), &vocab, split).unwrap();
    let (train, dev, test) = (ds(&data.train, Split::Train), ds(&data.dev, Split::Dev), ds(&data.test, Split::Test));
    Corpus {
        data,
        vocab,
        sentences,
        train,
        dev,
        test,
    }
}

fn criterion_pretrain(c: &Corpus, ae_out: &mut Option<ModelCheckpoint>) -> Verdict {
    let t = Instant::now();
    let ae_cfg = AutoencoderConfig::desk(c.vocab.len());
    let mut cfg = TrainingConfig::new(Phase::Pretrain);
    cfg.seed = SEED;
    let (ae, log) = pretrain_autoencoder_unchecked(&c.sentences, &ae_cfg, c.vocab.hash(), None, &cfg).unwrap();
    let elapsed = t.elapsed();
    let (_, held) = heldout_split(&c.sentences, cfg.heldout_fraction, cfg.seed);
    let acc = token_accuracy(&ae, &held, 1).unwrap();
    let pass = log.gate_met && acc >= 0.99 && log.epochs.len() <= 10 && elapsed < Duration::from_secs(15 * 60);
    *ae_out = Some(ae);
    Verdict::new(
        pass,
        format!(
            "{} sentences, vocab {}, held-out token accuracy {:.4} after {} epoch(s), {:.0}s (need >= 0.99, <= 10 epochs, < 900s)",
            c.sentences.len(),
            c.vocab.len(),
            acc,
            log.epochs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Frozen-tensor hashes before and after one fine-tuning run.
struct Audit {
    run: String,
    ae_before: BTreeMap<String, String>,
    ae_after: BTreeMap<String, String>,
    clf_before: BTreeMap<String, String>,
    clf_after: BTreeMap<String, String>,
    decoder_changed: bool,
}

struct FlipRun {
    tuned: ModelCheckpoint,
    pairs: Vec<(Vec<String>, Vec<String>)>,
    generated: Vec<Vec<usize>>,
}

fn flip_run(
    c: &Corpus,
    ae: &ModelCheckpoint,
    clf: &ModelCheckpoint,
    lambda: f64,
    label: String,
    audits: &mut Vec<Audit>,
) -> FlipRun {
    let mut cfg = TrainingConfig::new(Phase::FlipFinetune);
    cfg.seed = SEED;
    cfg.learning_rate = FINETUNE_LR;
    cfg.epochs = FINETUNE_EPOCHS;
    cfg.cosine_loss_weight = lambda;
    let ae_before = checkpoint_hashes(ae, |n| !is_decoder_param(n));
    let clf_before = checkpoint_hashes(clf, |_| true);
    let decoder_before = checkpoint_hashes(ae, is_decoder_param);
    let (tuned, _) = finetune_with_flip(ae, clf, &c.train.flip_labels(0, 1).unwrap(), &cfg).unwrap();
    audits.push(Audit {
        run: label,
        ae_before,
        ae_after: checkpoint_hashes(&tuned, |n| !is_decoder_param(n)),
        clf_before,
        clf_after: checkpoint_hashes(clf, |_| true),
        decoder_changed: checkpoint_hashes(&tuned, is_decoder_param) != decoder_before,
    });
    let test = c.test.flip_labels(0, 1).unwrap();
    let originals: Vec<Vec<usize>> = test.examples.iter().map(|e| e.first.clone()).collect();
    let generated = generate_reconstructions(&tuned, &originals, cfg.max_len_factor, 1).unwrap();
    let pairs = originals
        .iter()
        .zip(&generated)
        .map(|(o, g)| (c.vocab.decode(o), c.vocab.decode(g)))
        .collect();
    FlipRun {
        tuned,
        pairs,
        generated,
    }
}

/// PMI of every word in `target` straight from occurrence counts.
fn pmi_oracle(docs: &[(Vec<String>, usize)], classes: usize, target: usize, k: f64) -> BTreeMap<String, f64> {
    let mut cell: HashMap<(&str, usize), f64> = HashMap::new();
    let mut words: HashSet<&str> = HashSet::new();
    for (toks, label) in docs {
        for t in toks {
            *cell.entry((t.as_str(), *label)).or_default() += 1.0;
            words.insert(t.as_str());
        }
    }
    let n = |w: &str, c: usize| cell.get(&(w, c)).copied().unwrap_or(0.0) + k;
    let total: f64 = words.iter().map(|w| (0..classes).map(|c| n(w, c)).sum::<f64>()).sum();
    let p_c = words.iter().map(|w| n(w, target)).sum::<f64>() / total;
    words
        .iter()
        .filter(|w| cell.contains_key(&(**w, target)))
        .map(|w| {
            let p_w = (0..classes).map(|c| n(w, c)).sum::<f64>() / total;
            (w.to_string(), (n(w, target) / total / (p_w * p_c)).ln())
        })
        .collect()
}

fn criterion_artifacts(c: &Corpus, ae: &ModelCheckpoint, audits: &mut Vec<Audit>) -> Verdict {
    let target = 1;
    let artifact = c.data.artifacts_of(target)[0].clone();
    let docs: Vec<(Vec<String>, usize)> = c.data.train.iter().map(|e| (e.first.clone(), e.label)).collect();
    let pmi = pmi_ranking(&docs, c.data.class_names.len(), target, DEFAULT_PMI_SMOOTHING).unwrap();
    let oracle = pmi_oracle(&docs, c.data.class_names.len(), target, DEFAULT_PMI_SMOOTHING);
    let oracle_diff = pmi
        .terms
        .iter()
        .map(|(t, s)| oracle.get(t).map_or(f64::INFINITY, |o| (o - s).abs()))
        .fold(0.0, f64::max);
    let oracle_top = oracle
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(t, _)| t.clone());
    let pmi_ok = pmi.rank_of(&artifact) == Some(0)
        && oracle_top.as_deref() == Some(artifact.as_str())
        && pmi.len() == oracle.len()
        && oracle_diff <= 1e-12;
    let mut pass = pmi_ok;
    let mut parts = vec![format!(
        "artifact `{artifact}`: PMI rank {:?}, oracle max |diff| {oracle_diff:.1e}",
        pmi.rank_of(&artifact).map(|r| r + 1)
    )];

    for variant in [ClassifierVariant::Rnn, ClassifierVariant::Cnn, ClassifierVariant::Dan] {
        let t = Instant::now();
        let mut cfg = TrainingConfig::new(Phase::TrainClf);
        cfg.seed = SEED;
        let clf_cfg = ClassifierConfig::desk(variant, c.vocab.len(), c.data.class_names.len());
        let (clf, _) = train_classifier(&c.train, Some(&c.dev), &clf_cfg, c.vocab.hash(), None, &cfg).unwrap();
        let acc = classifier_accuracy(&clf, &c.test, 1).unwrap();
        let run = flip_run(c, ae, &clf, 1.0, format!("{} λ=1", variant.name()), audits);
        let examples: Vec<Example> = run
            .generated
            .iter()
            .map(|g| Example {
                label: target,
                first: g.clone(),
                second: None,
            })
            .collect();
        let fool = fool_rate(&clf, &examples, 1).unwrap();
        let sift = sift_term_ranking(&run.pairs).unwrap();
        let rank = sift.rank_of(&artifact);
        let elapsed = t.elapsed();
        let ok = acc >= 0.95
            && fool >= 70.0
            && rank.is_some_and(|r| r < 3)
            && elapsed < Duration::from_secs(30 * 60)
            && run.tuned.meta.get("frozen_audit").is_some();
        pass &= ok;
        parts.push(format!(
            "{}: clf acc {:.1}%, fool rate {fool:.1}%, SIFT rank {:?}, {:.0}s",
            variant.name(),
            100.0 * acc,
            rank.map(|r| r + 1),
            elapsed.as_secs_f64()
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

fn criterion_similarity(c: &Corpus, ae: &ModelCheckpoint, audits: &mut Vec<Audit>) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_identity = 0.0f64;
    for _ in 0..100 {
        let (vocab, dim) = (rng.gen_range(3..30), rng.gen_range(1..20));
        let table = uniform(&mut rng, &[vocab, dim], -1.0, 1.0);
        let ids: Vec<usize> = (0..rng.gen_range(1..15)).map(|_| rng.gen_range(0..vocab)).collect();
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng);
        for generated in [&ids, &shuffled] {
            let mut t = Tape::new();
            let emb = t.constant(table.clone());
            let rows: Vec<Var> = generated.iter().map(|&i| t.constant(Tensor::one_hot(vocab, i))).collect();
            let rows = t.stack_rows(&rows).unwrap();
            let term = similarity_penalty(&mut t, emb, &ids, rows).unwrap();
            worst_identity = worst_identity.max(t.value(term).item().abs());
        }
    }

    let mut cfg = TrainingConfig::new(Phase::TrainClf);
    cfg.seed = SEED;
    let clf_cfg = ClassifierConfig::desk(ClassifierVariant::Dan, c.vocab.len(), c.data.class_names.len());
    let (clf, _) = train_classifier(&c.train, Some(&c.dev), &clf_cfg, c.vocab.hash(), None, &cfg).unwrap();
    let loose = flip_run(c, ae, &clf, 0.0, "dan λ=0".into(), audits);
    let tight = flip_run(c, ae, &clf, 1e3, "dan λ=1e3".into(), audits);
    let (o0, o1) = (token_overlap(&loose.pairs).unwrap(), token_overlap(&tight.pairs).unwrap());
    Verdict::new(
        worst_identity <= 1e-12 && o1 > o0,
        format!(
            "identity term max |1-cos| {worst_identity:.1e} over 200 cases; DAN flip overlap λ=0: {o0:.2}%, λ=1e3: {o1:.2}%"
        ),
    )
}

fn criterion_audit(audits: &[Audit]) -> Verdict {
    let mut bad = Vec::new();
    for a in audits {
        if a.ae_before != a.ae_after {
            bad.push(format!("{}: encoder/embedding tensor changed", a.run));
        }
        if a.clf_before != a.clf_after {
            bad.push(format!("{}: classifier tensor changed", a.run));
        }
        if !a.decoder_changed {
            bad.push(format!("{}: decoder did not train", a.run));
        }
    }
    let tensors: usize = audits.first().map_or(0, |a| a.ae_before.len() + a.clf_before.len());
    Verdict::new(
        !audits.is_empty() && bad.is_empty(),
        if bad.is_empty() {
            format!("{} fine-tuning runs, {tensors} frozen tensors each hash-identical", audits.len())
        } else {
            bad.join("; ")
        },
    )
}

// ------------------------------------------------------------- criterion 9

fn sift(dir: &Path, args: &[&str]) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_sift"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("sift binary runs");
    assert!(
        out.status.success(),
        "sift {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pipeline(dir: &Path, run: &str) {
    let o = |step: &str| format!("{run}/{step}");
    let data = o("data");
    let (corpus, vocab, train, dev, test) = (
        format!("{data}/corpus.txt"),
        format!("{data}/vocab.txt"),
        format!("{data}/train.tsv"),
        format!("{data}/dev.tsv"),
        format!("{data}/test.tsv"),
    );
    let g = ["--seed", "11", "--threads", "1"];
    let with = |rest: &[&str]| -> Vec<String> { g.iter().chain(rest).map(|s| s.to_string()).collect() };
    let call = |args: Vec<String>| sift(dir, &args.iter().map(String::as_str).collect::<Vec<_>>());
    let small_ae = ["--embed-dim", "16", "--enc-hidden", "8", "--attn-dim", "8", "--epochs", "2", "--allow-unconverged"];
    call(with(&["synth", "--vocab-size", "40", "--num-examples", "160", "--out", &data]));
    call(with(&[&["pretrain", "--corpus", &corpus, "--vocab", &vocab, "--out", &o("ae")][..], &small_ae].concat()));
    call(with(&[
        &["pretrain", "--corpus", &corpus, "--out", &o("ae32"), "--precision", "f32"][..],
        &small_ae,
    ]
    .concat()));
    let ae = o("ae/ae.ckpt");
    call(with(&[
        "adapt", "--ae", &ae, "--vocab", &vocab, "--dataset", &train, "--epochs", "1", "--allow-ungated", "--out",
        &o("adapt"),
    ]));
    for v in ["rnn", "cnn", "dan"] {
        call(with(&[
            "train-clf", "--train", &train, "--dev", &dev, "--vocab", &vocab, "--variant", v, "--epochs", "2",
            "--embed-dim", "12", "--hidden", "8", "--num-filters", "6", "--out", &o(&format!("clf_{v}")),
        ]));
    }
    let clf = o("clf_cnn/clf.ckpt");
    call(with(&[
        "finetune", "--ae", &ae, "--clf", &clf, "--dataset", &train, "--eval", &test, "--vocab", &vocab, "--flip",
        "c0:c1", "--lambda", "2", "--epochs", "1", "--learning-rate", "1e-3", "--allow-ungated", "--out", &o("flip"),
    ]));
    call(with(&[
        "finetune", "--ae", &ae, "--clf", &o("clf_dan/clf.ckpt"), "--dataset", &dev, "--vocab", &vocab, "--epochs",
        "1", "--allow-ungated", "--out", &o("tune"),
    ]));
    call(with(&[
        "analyze", "--original", &o("flip/original.txt"), "--generated", &o("flip/generated.txt"), "--labels",
        &o("flip/labels.txt"), "--clf", &clf, "--vocab", &vocab, "--dataset", &train, "--out", &o("report"),
    ]));
}

fn output_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for step in std::fs::read_dir(root).unwrap() {
        let step = step.unwrap().path();
        for f in std::fs::read_dir(&step).unwrap() {
            let f = f.unwrap().path();
            let rel = format!(
                "{}/{}",
                step.file_name().unwrap().to_string_lossy(),
                f.file_name().unwrap().to_string_lossy()
            );
            let bytes = std::fs::read(&f).unwrap();
            if f.file_name().unwrap() == "run.json" {
                // Timings and paths differ by design; the output hashes must not.
                let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                out.insert(rel, serde_json::to_vec(&v["outputs"]).unwrap());
            } else {
                out.insert(rel, bytes);
            }
        }
    }
    out
}

fn criterion_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "a");
    pipeline(dir.path(), "b");
    let (a, b) = (output_files(&dir.path().join("a")), output_files(&dir.path().join("b")));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let ckpts = a.keys().filter(|k| k.ends_with(".ckpt")).count();
    let same_names = a.keys().eq(b.keys());
    Verdict::new(
        same_names && differing.is_empty() && ckpts >= 8 && a.contains_key("report/report.json"),
        format!(
            "two CLI pipeline runs (synth, pretrain f64/f32, adapt, train-clf x3, finetune x2, analyze): {} files, {ckpts} checkpoints, {} differ{}",
            a.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {differing:?}") }
        ),
    )
}

fn main() {
    let mut results = Vec::new();
    results.push(run(1, "gradient soundness", criterion_gradients));
    results.push(run(2, "Gumbel-max fidelity", criterion_gumbel_max));
    results.push(run(3, "straight-through contract", criterion_straight_through));
    results.push(run(7, "analysis oracles", criterion_analysis_oracles));

    let c = corpus();
    let mut ae = None;
    results.push(run(4, "pretraining gate", || criterion_pretrain(&c, &mut ae)));
    let mut audits = Vec::new();
    match &ae {
        Some(ae) => {
            results.push(run(6, "planted-artifact recovery", || criterion_artifacts(&c, ae, &mut audits)));
            results.push(run(8, "similarity term behaviour", || criterion_similarity(&c, ae, &mut audits)));
        }
        None => {
            for (id, title) in [(6, "planted-artifact recovery"), (8, "similarity term behaviour")] {
                results.push((id, title.into(), Verdict::new(false, "no pretrained autoencoder"), Duration::ZERO));
            }
        }
    }
    results.push(run(5, "frozen-weight audit", || criterion_audit(&audits)));
    results.push(run(9, "CLI determinism", criterion_determinism));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, title, v, elapsed) in &results {
        failed += usize::from(!v.pass);
        println!(
            "{} criterion {id} ({title}): {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
