use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use log::info;
use multicrf::data::{
    bio_to_bioes, load_embeddings, load_model, read_conll_path, save_model, write_conll,
    EmbeddingTable, LabelVocab, TokenSequence,
};
use multicrf::oracle::{
    generate_synthetic, gradient_check, write_synthetic, LabelStyle, Order, SyntheticSpec,
    GRAD_TOLERANCE,
};
use multicrf::timing::{run_bench, BenchSpec};
use multicrf::training::{build_examples, predict, span_scores, train_with, EpochRecord};
use multicrf::{
    DevMetric, Dims, Example, FamilyTag, ModelParams, ParamField, RngSeed, TrainReport,
};
use serde::Serialize;

use crate::config::{CliConfig, ConfigError, MetricChoice, SchemeChoice};

/// A command failure and the process exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad or missing configuration (exit 2).
    Usage(String),
    /// Gold and predicted files do not line up (exit 3).
    Alignment(String),
    /// Gradient check above tolerance (exit 4).
    Threshold(String),
    /// Anything else from the library (exit 1).
    Run(multicrf::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Run(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Alignment(_) => 3,
            Failure::Threshold(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Alignment(m) | Failure::Threshold(m) => f.write_str(m),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<multicrf::Error> for Failure {
    fn from(e: multicrf::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Run(io::Error::other(e).into())
    }
}

pub type CmdResult = Result<(), Failure>;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn read_labeled(path: &Path, scheme: SchemeChoice) -> Result<Vec<TokenSequence>, Failure> {
    let mut seqs = read_conll_path(path)?;
    for seq in &mut seqs {
        let Some(labels) = &seq.labels else {
            return Err(Failure::Usage(format!(
                "{} has unlabeled sentences",
                path.display()
            )));
        };
        if scheme == SchemeChoice::Bioes {
            seq.labels = Some(bio_to_bioes(labels)?);
        }
    }
    Ok(seqs)
}

/// Everything a training run reads from disk.
struct Corpus {
    vocab: LabelVocab,
    train: Vec<Example>,
    dev: Vec<Example>,
    test: Option<(Vec<TokenSequence>, Vec<Example>)>,
}

fn load_corpus(cfg: &CliConfig) -> Result<Corpus, Failure> {
    let emb_path = cfg.require("embeddings_path", &cfg.embeddings_path)?;
    let train_path = cfg.require("train_path", &cfg.train_path)?;
    cfg.train
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;

    let table: EmbeddingTable = load_embeddings(emb_path, None)?;
    let train_seqs = read_labeled(train_path, cfg.scheme)?;
    let vocab = LabelVocab::from_corpus(&train_seqs)?;
    let train = build_examples(&train_seqs, &table, &vocab)?;
    let dev = match &cfg.dev_path {
        Some(p) => build_examples(&read_labeled(p, cfg.scheme)?, &table, &vocab)?,
        None => Vec::new(),
    };
    let test = match &cfg.test_path {
        Some(p) => {
            let seqs = read_labeled(p, cfg.scheme)?;
            let ex = build_examples(&seqs, &table, &vocab)?;
            Some((seqs, ex))
        }
        None => None,
    };
    info!(
        "{} train / {} dev sentences, {} labels ({})",
        train.len(),
        dev.len(),
        vocab.len(),
        vocab.scheme.name()
    );
    Ok(Corpus {
        vocab,
        train,
        dev,
        test,
    })
}

fn metric_for(cfg: &CliConfig, vocab: &LabelVocab) -> DevMetric {
    match cfg.metric {
        MetricChoice::Auto => DevMetric::auto(vocab),
        MetricChoice::Accuracy => DevMetric::TokenAccuracy,
        MetricChoice::F1 => DevMetric::SpanF1 {
            labels: vocab.labels().to_vec(),
        },
    }
}

fn score_test(
    params: &ModelParams,
    vocab: &LabelVocab,
    seqs: &[TokenSequence],
    examples: &[Example],
) -> Result<multicrf::EvalResult, Failure> {
    let pred: Vec<Vec<String>> = predict(params, examples)?
        .iter()
        .map(|p| vocab.decode(p))
        .collect();
    let gold: Vec<Vec<String>> = seqs
        .iter()
        .map(|s| s.labels.clone().unwrap_or_default())
        .collect();
    Ok(span_scores(&gold, &pred)?)
}

fn write_report(path: &Path, report: &TrainReport) -> CmdResult {
    let mut w = csv::Writer::from_path(path)?;
    for record in &report.epochs {
        w.serialize(record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(cfg: &CliConfig) -> CmdResult {
    cfg.require("embeddings_path", &cfg.embeddings_path)?;
    let model_path = cfg.require("model_path", &cfg.model_path)?;
    let corpus = load_corpus(cfg)?;
    let metric = metric_for(cfg, &corpus.vocab);

    let stdout = io::stdout();
    let (params, report) = train_with(
        &cfg.train,
        corpus.vocab.len(),
        &corpus.train,
        &corpus.dev,
        &metric,
        |r: &EpochRecord| {
            let line = serde_json::to_string(r).expect("plain record");
            let _ = writeln!(stdout.lock(), "{line}");
        },
    )?;
    save_model(model_path, &params, &corpus.vocab)?;
    println!(
        "best_epoch={} best_dev_score={:.6} model={}",
        report.best_epoch,
        report.best_dev_score,
        model_path.display()
    );
    if let Some(out) = &cfg.output_path {
        write_report(out, &report)?;
    }
    if let Some((seqs, examples)) = &corpus.test {
        let result = score_test(&params, &corpus.vocab, seqs, examples)?;
        println!("test {result}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SmallDataRow {
    fraction: f64,
    seed: u64,
    train_sentences: usize,
    best_epoch: usize,
    dev_score: f64,
    test_f1: f64,
    test_accuracy: f64,
}

/// Trains once per (fraction, seed) and writes one CSV row each.
pub fn small_data(
    cfg: &CliConfig,
    fractions: &[f64],
    seeds: &[u64],
    out: Option<&Path>,
) -> CmdResult {
    if fractions.is_empty() {
        return Err(Failure::Usage("no fractions given".into()));
    }
    let corpus = load_corpus(cfg)?;
    let metric = metric_for(cfg, &corpus.vocab);
    let seeds = if seeds.is_empty() {
        vec![cfg.train.seed.0]
    } else {
        seeds.to_vec()
    };
    let mut w = csv::Writer::from_writer(output(out)?);
    for &fraction in fractions {
        for &seed in &seeds {
            let mut tc = cfg.train.clone();
            tc.subsample_fraction = fraction;
            tc.seed = RngSeed(seed);
            tc.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let (params, report) = train_with(
                &tc,
                corpus.vocab.len(),
                &corpus.train,
                &corpus.dev,
                &metric,
                |_| {},
            )?;
            let (test_f1, test_accuracy) = match &corpus.test {
                Some((seqs, ex)) => {
                    let r = score_test(&params, &corpus.vocab, seqs, ex)?;
                    (r.f1, r.token_accuracy)
                }
                None => (f64::NAN, f64::NAN),
            };
            info!("fraction {fraction} seed {seed}: test f1 {test_f1:.4}");
            w.serialize(SmallDataRow {
                fraction,
                seed,
                train_sentences: multicrf::training::subsample(&corpus.train, fraction, tc.seed)?
                    .len(),
                best_epoch: report.best_epoch,
                dev_score: report.best_dev_score,
                test_f1,
                test_accuracy,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn tag(model: &Path, embeddings: &Path, input: &Path, out: Option<&Path>) -> CmdResult {
    let (params, vocab) = load_model(model)?;
    let table = load_embeddings(embeddings, Some(params.dims.d_h))?;
    let mut seqs = read_conll_path(input)?;
    let examples: Vec<Example> = seqs
        .iter()
        .map(|s| {
            Ok(Example {
                reps: multicrf::data::sequence_to_reps(s, &table)?,
                gold: Vec::new(),
            })
        })
        .collect::<multicrf::Result<_>>()?;
    for (seq, ids) in seqs.iter_mut().zip(predict(&params, &examples)?) {
        seq.labels = Some(vocab.decode(&ids));
    }
    write_conll(output(out)?, &seqs)?;
    Ok(())
}

fn labels_of(seqs: &[TokenSequence], path: &Path) -> Result<Vec<Vec<String>>, Failure> {
    seqs.iter()
        .map(|s| {
            s.labels.clone().ok_or_else(|| {
                Failure::Alignment(format!("{} has unlabeled sentences", path.display()))
            })
        })
        .collect()
}

pub fn eval(gold_path: &Path, pred_path: &Path, json: bool) -> CmdResult {
    let gold = read_conll_path(gold_path)?;
    let pred = read_conll_path(pred_path)?;
    if gold.len() != pred.len() {
        return Err(Failure::Alignment(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
        if g.tokens != p.tokens {
            return Err(Failure::Alignment(format!(
                "sentence {}: tokens differ",
                i + 1
            )));
        }
    }
    let result = span_scores(&labels_of(&gold, gold_path)?, &labels_of(&pred, pred_path)?)?;
    if json {
        println!("{}", serde_json::to_string(&result).expect("plain record"));
    } else {
        println!(
            "{result} gold_spans={} predicted_spans={} correct_spans={}",
            result.gold_spans, result.predicted_spans, result.correct_spans
        );
    }
    Ok(())
}

pub struct GradcheckArgs {
    pub families: Vec<FamilyTag>,
    pub dims: Dims,
    pub len: usize,
    pub seed: u64,
    pub seeds: u64,
    pub corrupt: Option<ParamField>,
}

pub fn gradcheck(a: &GradcheckArgs) -> CmdResult {
    let mut failed = Vec::new();
    for &family in &a.families {
        let corrupt = a.corrupt.filter(|f| family.fields().contains(f));
        for seed in a.seed..a.seed + a.seeds.max(1) {
            let report = gradient_check(family, a.dims, a.len, RngSeed(seed), corrupt)?;
            println!(
                "{family} seed={seed} max_rel_error={:.3e} logz_rel_error={:.3e} viterbi={}",
                report.max_rel_error(),
                report.log_partition_rel_error,
                if report.viterbi_matches {
                    "ok"
                } else {
                    "mismatch"
                }
            );
            for f in report.failures(GRAD_TOLERANCE) {
                failed.push(format!(
                    "{family} seed={seed} field={} rel_error={:.3e}",
                    f.field, f.max_rel_error
                ));
            }
            if !(report.viterbi_matches && report.log_partition_rel_error < 1e-10) {
                failed.push(format!("{family} seed={seed} inference check"));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Threshold(format!(
            "gradient check failed (tolerance {GRAD_TOLERANCE:e}):\n  {}",
            failed.join("\n  ")
        )))
    }
}

#[derive(Serialize)]
struct BenchRow {
    family: &'static str,
    labels: usize,
    d_h: usize,
    d_t: usize,
    d_r: usize,
    len: usize,
    batch: usize,
    reps: usize,
    train_step_ms: f64,
    decode_ms: f64,
}

pub fn bench(families: &[FamilyTag], base: BenchSpec, out: Option<&Path>) -> CmdResult {
    let mut w = csv::Writer::from_writer(output(out)?);
    for &family in families {
        let spec = BenchSpec { family, ..base };
        let r = run_bench(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
        w.serialize(BenchRow {
            family: family.name(),
            labels: spec.num_labels,
            d_h: spec.d_h,
            d_t: spec.d_t,
            d_r: spec.d_r,
            len: spec.len,
            batch: spec.batch,
            reps: spec.reps,
            train_step_ms: r.train_step_secs * 1e3,
            decode_ms: r.decode_secs * 1e3,
        })?;
        w.flush()?;
    }
    Ok(())
}

pub fn synth(spec: &SyntheticSpec, dir: &Path) -> CmdResult {
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = generate_synthetic(spec)?;
    let paths = write_synthetic(&corpus, dir)?;
    for (name, path) in paths {
        println!("{name} {}", path.display());
    }
    Ok(())
}

pub fn parse_order(s: &str) -> Result<Order, String> {
    match s {
        "first" => Ok(Order::First),
        "second" => Ok(Order::Second),
        _ => Err(format!("order must be first or second, not {s:?}")),
    }
}

pub fn parse_style(s: &str) -> Result<LabelStyle, String> {
    match s {
        "plain" => Ok(LabelStyle::Plain),
        "bioes" => Ok(LabelStyle::Bioes),
        _ => Err(format!("style must be plain or bioes, not {s:?}")),
    }
}

pub fn parse_field(s: &str) -> Result<ParamField, String> {
    ParamField::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = ParamField::ALL.iter().map(|f| f.name()).collect();
        format!("unknown field {s:?}; expected one of {}", names.join(", "))
    })
}
