use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sift_core::analysis::{
    build_report, fool_rate, pmi_ranking, pos_change_table, sentiment_shift, sift_term_ranking, token_overlap,
    weighted_kendall_tau, ReportComponent, RuleTagger, SentimentLexicon, TagLexicon, Tagger, DEFAULT_PMI_SMOOTHING,
    DEFAULT_TAU_TOP_K,
};
use sift_core::checkpoint::ModelCheckpoint;
use sift_core::data::{
    generate_synthetic, load_dataset, load_embeddings, read_aligned_lines, read_corpus, read_text_dataset, write_lines,
    EmbeddingTable, Example, LabeledDataset, Split, SyntheticSpec, TextExample, Vocabulary, DEFAULT_MAX_VOCAB,
};
use sift_core::models::{AutoencoderConfig, ClassifierConfig, ClassifierVariant, PairCombiner};
use sift_core::pipeline::{
    adapt_autoencoder, finetune_decoder, finetune_with_flip, generate_reconstructions, pretrain_autoencoder,
    pretrain_autoencoder_unchecked, train_classifier, Phase, Precision, TrainingConfig, TrainingLog,
};

use crate::cli::{AdaptArgs, AnalyzeArgs, Cli, Command, FinetuneArgs, PretrainArgs, SynthArgs, TrainClfArgs};
use crate::error::{CliError, CliResult};
use crate::options::ConfigFile;
use crate::run::{sha256_file, Run, RunManifest, Timings};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_OUT: &str = "sift-out";

/// Global settings after resolution.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub seed: u64,
    pub threads: usize,
    pub precision: Precision,
}

/// Copies every option that is set onto the matching config field.
macro_rules! apply {
    ($opts:expr => $target:expr; $($field:ident $(as $dst:ident)?),* $(,)?) => {
        $(
            if let Some(v) = $opts.$field.clone() {
                apply!(@set $target, v, $field $(, $dst)?);
            }
        )*
    };
    (@set $target:expr, $v:expr, $field:ident) => { $target.$field = $v; };
    (@set $target:expr, $v:expr, $field:ident, $dst:ident) => { $target.$dst = $v; };
}

/// Runs one command and commits its outputs. Returns the manifest written.
pub fn execute(cli: Cli, argv: Vec<String>) -> CliResult<RunManifest> {
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest, cli.out.as_deref());
    }
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let precision = match cli.precision.clone().or(file.precision.clone()) {
        Some(p) => p.parse::<Precision>()?,
        None => Precision::default(),
    };
    let settings = Settings {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        threads: cli.threads.or(file.threads).unwrap_or(1),
        precision,
    };
    if settings.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut run = Run::new(&out)?;
    if let Some(c) = &cli.config {
        run.input(c)?;
    }
    let config = match &cli.command {
        Command::Synth(a) => synth(&settings, &file, &mut run, a)?,
        Command::Pretrain(a) => pretrain(&settings, &file, &mut run, a)?,
        Command::Adapt(a) => adapt(&settings, &file, &mut run, a)?,
        Command::TrainClf(a) => train_clf(&settings, &file, &mut run, a)?,
        Command::Finetune(a) => finetune(&settings, &file, &mut run, a)?,
        Command::Analyze(a) => analyze(&file, &mut run, a)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    let cwd = std::env::current_dir().map_err(|e| CliError::io(".", e))?;
    run.commit(RunManifest {
        command: cli.command.name().to_string(),
        argv,
        cwd: cwd.display().to_string(),
        config,
        seed: settings.seed,
        threads: settings.threads,
        precision: settings.precision,
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        timings: Timings {
            started_unix_ms: 0,
            wall_seconds: 0.0,
        },
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

fn replay(manifest_path: &Path, out: Option<&Path>) -> CliResult<RunManifest> {
    let out = out.map(std::path::absolute).transpose().map_err(|e| CliError::io(".", e))?;
    let old = RunManifest::load(manifest_path)?;
    std::env::set_current_dir(&old.cwd).map_err(|e| CliError::io(&old.cwd, e))?;
    for (path, expected) in &old.inputs {
        let found = sha256_file(Path::new(path))?;
        if &found != expected {
            return Err(CliError::HashMismatch {
                path: path.clone(),
                expected: expected.clone(),
                found,
            });
        }
    }
    let mut cli = Cli::try_parse_from(std::iter::once("sift".to_string()).chain(old.argv.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a replay manifest cannot itself be replayed".into()));
    }
    if out.is_some() {
        cli.out = out;
    }
    let new = execute(cli, old.argv.clone())?;
    let mut differing: Vec<String> = old
        .outputs
        .iter()
        .filter(|(name, hash)| new.outputs.get(*name) != Some(hash))
        .map(|(name, _)| name.clone())
        .collect();
    differing.extend(new.outputs.keys().filter(|n| !old.outputs.contains_key(*n)).cloned());
    if !differing.is_empty() {
        return Err(CliError::ReplayMismatch {
            manifest: manifest_path.display().to_string(),
            files: differing,
        });
    }
    log::info!("replay reproduced {} output file(s)", new.outputs.len());
    Ok(new)
}

fn to_value(v: &impl Serialize) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Core(e.into()))
}

fn write_json(path: &Path, v: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Core(e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_log(run: &mut Run, name: &str, log: &TrainingLog) -> CliResult<()> {
    write_json(&run.output(name)?, log)
}

fn training(phase: Phase, s: &Settings) -> TrainingConfig {
    let mut cfg = TrainingConfig::new(phase);
    cfg.seed = s.seed;
    cfg.threads = s.threads;
    cfg.precision = s.precision;
    cfg
}

fn embeddings_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn load_table(path: Option<&Path>, vocab: &Vocabulary, seed: u64) -> CliResult<Option<EmbeddingTable>> {
    Ok(path.map(|p| load_embeddings(p, vocab, &mut embeddings_rng(seed))).transpose()?)
}

/// Fails unless the autoencoder passed its pretraining gate.
fn require_gate(ae: &ModelCheckpoint, allow: bool, command: &str) -> CliResult<()> {
    ae.model.as_autoencoder()?;
    let met = ae.meta.get("gate_met").and_then(Value::as_bool).unwrap_or(false);
    if !met && !allow {
        return Err(CliError::PhaseOrder(format!(
            "{command} needs an autoencoder that met its pretraining accuracy gate (pass --allow-ungated to override)"
        )));
    }
    Ok(())
}

fn classifier_classes(clf: &ModelCheckpoint) -> CliResult<Vec<String>> {
    if clf.meta.get("phase").and_then(Value::as_str) != Some(Phase::TrainClf.name()) {
        return Err(CliError::PhaseOrder("checkpoint was not produced by train-clf".into()));
    }
    clf.model.as_classifier()?;
    let names = clf
        .meta
        .get("class_names")
        .cloned()
        .ok_or_else(|| CliError::PhaseOrder("classifier checkpoint has no class names".into()))?;
    serde_json::from_value(names).map_err(|e| CliError::Core(e.into()))
}

fn tsv_text(examples: &[TextExample], class_names: &[String]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&class_names[e.label]);
        out.push('\t');
        out.push_str(&e.first.join(" "));
        if let Some(s) = &e.second {
            out.push('\t');
            out.push_str(&s.join(" "));
        }
        out.push('\n');
    }
    out
}

fn synth(s: &Settings, file: &ConfigFile, run: &mut Run, args: &SynthArgs) -> CliResult<Value> {
    let o = args.opts.clone().or(file.synth.clone());
    let mut spec = SyntheticSpec {
        seed: s.seed,
        ..SyntheticSpec::default()
    };
    apply!(o => spec;
        vocab_size, num_examples, num_classes, min_len, max_len, artifacts_per_class, artifact_in_class_prob,
        artifact_cross_class_prob, signal_words_per_class, signal_tokens_per_sentence, dev_fraction, test_fraction,
    );
    let data = generate_synthetic(&spec)?;
    for (name, part) in [("train.tsv", &data.train), ("dev.tsv", &data.dev), ("test.tsv", &data.test)] {
        let path = run.output(name)?;
        std::fs::write(&path, tsv_text(part, &data.class_names)).map_err(|e| CliError::io(&path, e))?;
    }
    let sentences: Vec<Vec<String>> = data
        .all()
        .flat_map(|e| std::iter::once(e.first.clone()).chain(e.second.clone()))
        .collect();
    write_lines(run.output("corpus.txt")?, &sentences)?;
    let vocab = Vocabulary::build(sentences.iter().map(Vec::as_slice), DEFAULT_MAX_VOCAB)?;
    vocab.save(run.output("vocab.txt")?)?;
    write_json(&run.output("artifacts.json")?, &data.manifest)?;
    write_json(&run.output("signal_words.json")?, &data.signal_words)?;
    Ok(json!({ "synthetic": to_value(&spec)? }))
}

fn pretrain(s: &Settings, file: &ConfigFile, run: &mut Run, args: &PretrainArgs) -> CliResult<Value> {
    let o = args.opts.clone().or(file.pretrain.clone());
    let sentences = read_corpus(run.input(&args.corpus)?)?;
    let vocab = match run.input_opt(args.vocab.as_deref())? {
        Some(p) => Vocabulary::load(p)?,
        None => {
            let v = Vocabulary::build(sentences.iter().map(Vec::as_slice), o.max_vocab.unwrap_or(DEFAULT_MAX_VOCAB))?;
            v.save(run.output("vocab.txt")?)?;
            v
        }
    };
    let table = load_table(run.input_opt(args.embeddings.as_deref())?, &vocab, s.seed)?;
    let mut ae_cfg = AutoencoderConfig::desk(vocab.len());
    if let Some(t) = &table {
        ae_cfg.embed_dim = t.dim();
    }
    apply!(o => ae_cfg; embed_dim, enc_hidden, attn_dim, max_len);
    ae_cfg.dec_hidden = 2 * ae_cfg.enc_hidden;
    let mut cfg = training(Phase::Pretrain, s);
    apply!(o => cfg; learning_rate, epochs, batch_size, clip_norm, target_accuracy, heldout_fraction);
    let corpus: Vec<Vec<usize>> = sentences.iter().map(|t| vocab.encode(t)).collect();
    let (ckpt, log) = if args.allow_unconverged {
        pretrain_autoencoder_unchecked(&corpus, &ae_cfg, vocab.hash(), table.as_ref(), &cfg)?
    } else {
        pretrain_autoencoder(&corpus, &ae_cfg, vocab.hash(), table.as_ref(), &cfg)?
    };
    ckpt.save(run.output("ae.ckpt")?)?;
    write_log(run, "pretrain_log.json", &log)?;
    Ok(json!({ "autoencoder": to_value(&ae_cfg)?, "training": to_value(&cfg)? }))
}

fn adapt(s: &Settings, file: &ConfigFile, run: &mut Run, args: &AdaptArgs) -> CliResult<Value> {
    let o = args.opts.clone().or(file.adapt.clone());
    let ae = ModelCheckpoint::load(run.input(&args.ae)?)?;
    require_gate(&ae, args.allow_ungated, "adapt")?;
    let vocab = Vocabulary::load(run.input(&args.vocab)?)?;
    let sentences: Vec<Vec<String>> = match (&args.corpus, &args.dataset) {
        (Some(c), _) => read_corpus(run.input(c)?)?,
        (None, Some(d)) => read_text_dataset(run.input(d)?, None)?
            .examples
            .into_iter()
            .flat_map(|e| std::iter::once(e.first).chain(e.second))
            .collect(),
        (None, None) => return Err(CliError::Usage("adapt needs --corpus or --dataset".into())),
    };
    let corpus: Vec<Vec<usize>> = sentences.iter().map(|t| vocab.encode(t)).collect();
    let mut cfg = training(Phase::Adapt, s);
    apply!(o => cfg; learning_rate, epochs, batch_size, clip_norm, target_accuracy);
    let (ckpt, log) = adapt_autoencoder(&ae, &corpus, vocab.hash(), &cfg)?;
    ckpt.save(run.output("ae.ckpt")?)?;
    write_log(run, "adapt_log.json", &log)?;
    Ok(json!({ "training": to_value(&cfg)? }))
}

fn parse_combiner(s: &str) -> CliResult<PairCombiner> {
    match s {
        "concat" => Ok(PairCombiner::Concat),
        "rich" => Ok(PairCombiner::Rich),
        _ => Err(CliError::Usage(format!("unknown combiner `{s}` (expected concat or rich)"))),
    }
}

fn train_clf(s: &Settings, file: &ConfigFile, run: &mut Run, args: &TrainClfArgs) -> CliResult<Value> {
    let o = args.opts.clone().or(file.train_clf.clone());
    let variant: ClassifierVariant = o
        .variant
        .as_deref()
        .ok_or_else(|| CliError::Usage("train-clf needs --variant rnn|cnn|dan|pair".into()))?
        .parse()
        .map_err(|e: sift_core::Error| CliError::Usage(e.to_string()))?;
    let vocab = Vocabulary::load(run.input(&args.vocab)?)?;
    let raw = read_text_dataset(run.input(&args.train)?, None)?;
    let train = LabeledDataset::from_text(&raw.examples, raw.class_names.clone(), &vocab, Split::Train)?;
    let dev = run
        .input_opt(args.dev.as_deref())?
        .map(|p| load_dataset(p, &vocab, Some(&raw.class_names), Split::Dev))
        .transpose()?;
    let table = load_table(run.input_opt(args.embeddings.as_deref())?, &vocab, s.seed)?;
    let mut clf_cfg = ClassifierConfig::desk(variant, vocab.len(), train.num_classes());
    if let Some(t) = &table {
        clf_cfg.embed_dim = t.dim();
    }
    if let Some(c) = o.combiner.as_deref() {
        clf_cfg.combiner = parse_combiner(c)?;
    }
    apply!(o => clf_cfg; embed_dim, hidden, num_filters, filter_widths, dan_dropout as word_dropout);
    let mut cfg = training(Phase::TrainClf, s);
    apply!(o => cfg; learning_rate, epochs, batch_size, clip_norm);
    let (ckpt, log) = train_classifier(&train, dev.as_ref(), &clf_cfg, vocab.hash(), table.as_ref(), &cfg)?;
    ckpt.save(run.output("clf.ckpt")?)?;
    write_log(run, "train_clf_log.json", &log)?;
    Ok(json!({ "classifier": to_value(&clf_cfg)?, "training": to_value(&cfg)? }))
}

fn parse_flip(spec: &str, data: &LabeledDataset) -> CliResult<(usize, usize)> {
    let (from, to) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("--flip expects FROM:TO, got `{spec}`")))?;
    Ok((data.class_id(from)?, data.class_id(to)?))
}

fn finetune(s: &Settings, file: &ConfigFile, run: &mut Run, args: &FinetuneArgs) -> CliResult<Value> {
    let o = args.opts.clone().or(file.finetune.clone());
    let ae = ModelCheckpoint::load(run.input(&args.ae)?)?;
    require_gate(&ae, args.allow_ungated, "finetune")?;
    let clf = ModelCheckpoint::load(run.input(&args.clf)?)?;
    let classes = classifier_classes(&clf)?;
    let vocab = Vocabulary::load(run.input(&args.vocab)?)?;
    let data = load_dataset(run.input(&args.dataset)?, &vocab, Some(&classes), Split::Train)?;
    let eval = match run.input_opt(args.eval.as_deref())? {
        Some(p) => load_dataset(p, &vocab, Some(&classes), Split::Test)?,
        None => data.clone(),
    };

    let phase = if args.flip.is_some() { Phase::FlipFinetune } else { Phase::Finetune };
    let mut cfg = training(phase, s);
    apply!(o => cfg;
        learning_rate, epochs, batch_size, clip_norm, tau, word_dropout_rate, max_len_factor,
        lambda as cosine_loss_weight,
    );
    let (tuned, log, eval) = match &args.flip {
        Some(spec) => {
            let (from, to) = parse_flip(spec, &data)?;
            let (tuned, log) = finetune_with_flip(&ae, &clf, &data.flip_labels(from, to)?, &cfg)?;
            (tuned, log, eval.flip_labels(from, to)?)
        }
        None => {
            if o.lambda.is_some() {
                return Err(CliError::Usage("--lambda only applies together with --flip".into()));
            }
            let (tuned, log) = finetune_decoder(&ae, &clf, &data, &cfg)?;
            (tuned, log, eval)
        }
    };
    tuned.save(run.output("ae.ckpt")?)?;
    write_log(run, "finetune_log.json", &log)?;

    let originals: Vec<Vec<usize>> = eval.examples.iter().map(|e| e.first.clone()).collect();
    let generated = generate_reconstructions(&tuned, &originals, cfg.max_len_factor, cfg.threads)?;
    let decode = |rows: &[Vec<usize>]| rows.iter().map(|r| vocab.decode(r)).collect::<Vec<_>>();
    write_lines(run.output("original.txt")?, &decode(&originals))?;
    write_lines(run.output("generated.txt")?, &decode(&generated))?;
    let labels: Vec<Vec<String>> = eval.examples.iter().map(|e| vec![classes[e.label].clone()]).collect();
    write_lines(run.output("labels.txt")?, &labels)?;
    if eval.is_pair() {
        let seconds: Vec<Vec<usize>> = eval.examples.iter().filter_map(|e| e.second.clone()).collect();
        write_lines(run.output("second.txt")?, &decode(&seconds))?;
    }
    Ok(json!({ "flip": args.flip, "training": to_value(&cfg)? }))
}

fn read_labels(path: &Path) -> CliResult<Vec<String>> {
    Ok(read_aligned_lines(path)?.into_iter().map(|l| l.join(" ")).collect())
}

fn aligned(name: &str, rows: usize, expected: usize) -> CliResult<()> {
    if rows != expected {
        return Err(CliError::Usage(format!("{name} has {rows} lines, expected {expected}")));
    }
    Ok(())
}

fn analyze(file: &ConfigFile, run: &mut Run, args: &AnalyzeArgs) -> CliResult<Value> {
    let o = args.opts.clone().or(file.analyze.clone());
    let top_k = o.top_k.unwrap_or(DEFAULT_TAU_TOP_K);
    let smoothing = o.smoothing.unwrap_or(DEFAULT_PMI_SMOOTHING);
    let original = read_aligned_lines(run.input(&args.original)?)?;
    let generated = read_aligned_lines(run.input(&args.generated)?)?;
    aligned("--generated", generated.len(), original.len())?;
    let pairs: Vec<(Vec<String>, Vec<String>)> = original.iter().cloned().zip(generated.iter().cloned()).collect();
    let labels = run.input_opt(args.labels.as_deref())?.map(read_labels).transpose()?;
    if let Some(l) = &labels {
        aligned("--labels", l.len(), pairs.len())?;
    }

    let mut meta: BTreeMap<String, Value> = BTreeMap::new();
    let mut inputs = BTreeMap::new();
    let mut parts = Vec::new();
    meta.insert("pairs".into(), pairs.len().into());

    parts.push(ReportComponent::Overlap("generated".into(), token_overlap(&pairs)?));
    if let Some(p) = run.input_opt(args.extraction.as_deref())? {
        let extracted = read_aligned_lines(p)?;
        aligned("--extraction", extracted.len(), original.len())?;
        let ex_pairs: Vec<_> = original.iter().cloned().zip(extracted).collect();
        parts.push(ReportComponent::Overlap("extraction".into(), token_overlap(&ex_pairs)?));
        inputs.insert("extraction", sha256_file(p)?);
    }

    let sift = sift_term_ranking(&pairs)?;
    parts.push(ReportComponent::Terms("sift".into(), sift.clone()));
    if let Some(p) = run.input_opt(args.dataset.as_deref())? {
        let ds = read_text_dataset(p, None)?;
        let target = match (&args.target, &labels) {
            (Some(t), _) => t.clone(),
            (None, Some(l)) if !l.is_empty() && l.iter().all(|x| x == &l[0]) => l[0].clone(),
            _ => return Err(CliError::Usage("PMI ranking needs --target or a --labels file with one label".into())),
        };
        let target_id = ds
            .class_names
            .iter()
            .position(|c| *c == target)
            .ok_or_else(|| sift_core::Error::UnknownClass(target.clone()))?;
        let docs: Vec<(Vec<String>, usize)> = ds.examples.into_iter().map(|e| (e.first, e.label)).collect();
        let pmi = pmi_ranking(&docs, ds.class_names.len(), target_id, smoothing)?;
        match weighted_kendall_tau(&pmi, &sift, top_k) {
            Ok(tau) => parts.push(ReportComponent::Tau("pmi_vs_sift".into(), tau)),
            Err(sift_core::Error::DegenerateData(m)) => log::warn!("rank correlation skipped: {m}"),
            Err(e) => return Err(e.into()),
        }
        parts.push(ReportComponent::Terms("pmi".into(), pmi));
        meta.insert("target".into(), target.into());
        inputs.insert("dataset", sha256_file(p)?);
    }

    if let Some(p) = run.input_opt(args.clf.as_deref())? {
        let clf = ModelCheckpoint::load(p)?;
        let classes = classifier_classes(&clf)?;
        let vocab_path = args.vocab.as_deref().expect("clap requires --vocab with --clf");
        let vocab = Vocabulary::load(run.input(vocab_path)?)?;
        clf.check_vocab(vocab.hash())?;
        let seconds = run.input_opt(args.second.as_deref())?.map(read_aligned_lines).transpose()?;
        if let Some(s) = &seconds {
            aligned("--second", s.len(), pairs.len())?;
        }
        let label_names = labels.as_ref().expect("clap requires --labels with --clf");
        let examples = generated
            .iter()
            .zip(label_names)
            .enumerate()
            .map(|(i, (g, l))| {
                let label = classes
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| sift_core::Error::UnknownClass(l.clone()))?;
                Ok(Example {
                    label,
                    first: vocab.encode(g),
                    second: seconds.as_ref().map(|s| vocab.encode(&s[i])),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        parts.push(ReportComponent::FoolRate("generated".into(), fool_rate(&clf, &examples, 1)?));
        meta.insert("classifier_fingerprint".into(), clf.fingerprint.clone().into());
        inputs.insert("clf", sha256_file(p)?);
    }

    let tagger: Box<dyn Tagger> = match run.input_opt(args.tags.as_deref())? {
        Some(p) => {
            inputs.insert("tags", sha256_file(p)?);
            Box::new(TagLexicon::load(p)?)
        }
        None => Box::new(RuleTagger),
    };
    parts.push(ReportComponent::Pos("generated".into(), pos_change_table(&pairs, tagger.as_ref())?));
    if let Some(p) = run.input_opt(args.lexicon.as_deref())? {
        let lexicon = SentimentLexicon::load(p)?;
        let by = labels.clone().unwrap_or_else(|| vec!["all".to_string(); pairs.len()]);
        parts.push(ReportComponent::Sentiment("generated".into(), sentiment_shift(&pairs, &by, &lexicon)?));
        inputs.insert("lexicon", sha256_file(p)?);
    }

    inputs.insert("original", sha256_file(&args.original)?);
    inputs.insert("generated", sha256_file(&args.generated)?);
    if let Some(p) = &args.labels {
        inputs.insert("labels", sha256_file(p)?);
    }
    meta.insert("inputs".into(), to_value(&inputs)?);
    meta.insert("top_k".into(), top_k.into());
    meta.insert("pmi_smoothing".into(), smoothing.into());

    let report = build_report(meta, parts);
    report.save(run.output("report.json")?)?;
    let table_path = run.output("report.txt")?;
    std::fs::write(&table_path, report.render_table()).map_err(|e| CliError::io(&table_path, e))?;
    Ok(json!({ "top_k": top_k, "pmi_smoothing": smoothing, "target": args.target }))
}
