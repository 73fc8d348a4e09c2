//! Minibatch SGD with L2 regularization and patience-based early stopping.

use std::time::Instant;

use log::debug;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    bio_to_bioes, sequence_to_reps, EmbeddingTable, LabelVocab, Scheme, TokenSequence,
};
use crate::error::{Error, Result};
use crate::eval::{span_f1, token_accuracy, EvalResult};
use crate::inference::{decode_softmax, nll_and_grad, viterbi};
use crate::math::RngSeed;
use crate::potentials::{
    Dims, FamilyTag, GradAccumulator, ModelParams, ParamGrad, RepresentationSequence, Scorer,
};

/// Dev-set selection metric.
#[derive(Debug, Clone, PartialEq)]
pub enum DevMetric {
    TokenAccuracy,
    /// Span F1 over BIOES strings; `labels[i]` names label id `i`.
    SpanF1 {
        labels: Vec<String>,
    },
}

impl DevMetric {
    /// Span F1 for BIO/BIOES inventories, token accuracy otherwise.
    pub fn auto(vocab: &LabelVocab) -> DevMetric {
        match vocab.scheme {
            Scheme::Plain => DevMetric::TokenAccuracy,
            Scheme::Bio | Scheme::Bioes => DevMetric::SpanF1 {
                labels: vocab.labels().to_vec(),
            },
        }
    }
}

/// Span scores for label strings in either BIO or BIOES; BIO sequences
/// (gold and predicted alike) are converted first.
pub fn span_scores<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<EvalResult> {
    let scheme = Scheme::detect(gold.iter().chain(pred).flatten().map(|l| l.as_ref()));
    if scheme != Scheme::Bio {
        return span_f1(gold, pred);
    }
    let convert = |seqs: &[Vec<S>]| -> Result<Vec<Vec<String>>> {
        seqs.iter().map(|s| bio_to_bioes(s)).collect()
    };
    let mut result = span_f1(&convert(gold)?, &convert(pred)?)?;
    result.token_accuracy = span_f1(gold, pred)?.token_accuracy;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub family: FamilyTag,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub d_t: usize,
    pub d_r: usize,
    pub mlp_hidden: usize,
    pub seed: RngSeed,
    pub subsample_fraction: f64,
    /// `lr / (1 + lr_decay * epoch)`; 0 keeps the rate constant.
    pub lr_decay: f64,
    /// Rescale the minibatch gradient to at most this L2 norm.
    pub max_grad_norm: Option<f64>,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            family: FamilyTag::DQuadrilinear,
            learning_rate: 0.1,
            batch_size: 32,
            l2: 1e-8,
            max_epochs: 300,
            patience: 10,
            d_t: 100,
            d_r: 128,
            mlp_hidden: 128,
            seed: RngSeed(1),
            subsample_fraction: 1.0,
            lr_decay: 0.0,
            max_grad_norm: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidArgument(
                "subsample_fraction must be in (0, 1]".into(),
            ));
        }
        if self.l2 < 0.0 || self.lr_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "l2 and lr_decay must be >= 0".into(),
            ));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dims(&self, num_labels: usize, d_h: usize) -> Dims {
        Dims {
            num_labels,
            d_h,
            d_t: self.d_t,
            d_r: self.d_r,
            mlp_hidden: self.mlp_hidden,
        }
    }
}

/// A training or evaluation instance: frozen inputs and gold label ids.
#[derive(Debug, Clone)]
pub struct Example {
    pub reps: RepresentationSequence,
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_score: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_score: f64,
}

/// Looks up token vectors and encodes gold labels for labeled sequences.
pub fn build_examples(
    sequences: &[TokenSequence],
    table: &EmbeddingTable,
    vocab: &LabelVocab,
) -> Result<Vec<Example>> {
    sequences
        .iter()
        .map(|seq| {
            let labels = seq
                .labels
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("sequence has no labels".into()))?;
            Ok(Example {
                reps: sequence_to_reps(seq, table)?,
                gold: vocab.encode(labels)?,
            })
        })
        .collect()
}

/// `floor(fraction * N)` items without replacement, kept in original order.
pub fn subsample<T: Clone>(items: &[T], fraction: f64, seed: RngSeed) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subsample fraction {fraction} not in (0, 1]"
        )));
    }
    if fraction == 1.0 {
        return Ok(items.to_vec());
    }
    let k = (fraction * items.len() as f64).floor() as usize;
    let mut rng = seed.stream(0x5eed);
    let mut idx = rand::seq::index::sample(&mut rng, items.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| items[i].clone()).collect())
}

/// Label ids for every example, Viterbi (per-position argmax for softmax).
pub fn predict(params: &ModelParams, examples: &[Example]) -> Result<Vec<Vec<usize>>> {
    let scorer = Scorer::new(params)?;
    examples
        .iter()
        .map(|ex| {
            let lat = scorer.score(&ex.reps)?;
            Ok(match params.family {
                FamilyTag::Softmax => decode_softmax(&lat).labels,
                _ => viterbi(&lat).labels,
            })
        })
        .collect()
}

pub fn evaluate(params: &ModelParams, examples: &[Example], metric: &DevMetric) -> Result<f64> {
    let pred = predict(params, examples)?;
    let gold: Vec<Vec<usize>> = examples.iter().map(|e| e.gold.clone()).collect();
    match metric {
        DevMetric::TokenAccuracy => token_accuracy(&gold, &pred),
        DevMetric::SpanF1 { labels } => {
            let names = |ids: &Vec<usize>| -> Vec<&str> {
                ids.iter().map(|&i| labels[i].as_str()).collect()
            };
            let g: Vec<Vec<&str>> = gold.iter().map(names).collect();
            let p: Vec<Vec<&str>> = pred.iter().map(names).collect();
            Ok(span_scores(&g, &p)?.f1)
        }
    }
}

fn accumulate_range(scorer: &Scorer<'_>, batch: &[&Example]) -> Result<(f64, GradAccumulator)> {
    let mut acc = scorer.accumulator();
    let mut loss = 0.0;
    for ex in batch {
        let lat = scorer.score(&ex.reps)?;
        let (l, g) = nll_and_grad(&lat, &ex.gold)?;
        loss += l;
        scorer.accumulate(&ex.reps, &g, &mut acc)?;
    }
    Ok((loss, acc))
}

/// Summed NLL and summed parameter gradient over `batch`.
///
/// With more than one thread the batch is cut into contiguous chunks whose
/// partial sums are merged in chunk order, so results depend only on the
/// thread count.
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[&Example],
    threads: usize,
) -> Result<(f64, ParamGrad)> {
    let scorer = Scorer::new(params)?;
    let (loss, acc) = if threads <= 1 || batch.len() < 2 {
        accumulate_range(&scorer, batch)?
    } else {
        let chunk = batch.len().div_ceil(threads);
        let parts = batch
            .par_chunks(chunk)
            .map(|c| accumulate_range(&scorer, c))
            .collect::<Result<Vec<_>>>()?;
        let mut iter = parts.into_iter();
        let (mut loss, mut acc) = iter.next().expect("non-empty batch");
        for (l, a) in iter {
            loss += l;
            acc.merge(&a);
        }
        (loss, acc)
    };
    Ok((loss, scorer.finish(acc)))
}

/// One SGD update: `θ ← θ − lr · (grad / n + l2 · θ)`. Returns the summed
/// minibatch loss before the step.
pub fn sgd_step(
    params: &mut ModelParams,
    batch: &[&Example],
    learning_rate: f64,
    l2: f64,
    max_grad_norm: Option<f64>,
    threads: usize,
) -> Result<f64> {
    let (loss, mut grad) = batch_gradient(params, batch, threads)?;
    if !loss.is_finite() {
        return Err(Error::Diverged);
    }
    grad.scale(1.0 / batch.len() as f64);
    if l2 > 0.0 {
        grad.axpy(l2, params);
    }
    if let Some(max_norm) = max_grad_norm {
        let norm = grad.norm_sq().sqrt();
        if norm > max_norm {
            grad.scale(max_norm / norm);
        }
    }
    params.axpy(-learning_rate, &grad);
    Ok(loss)
}

fn run_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn train(
    config: &TrainConfig,
    num_labels: usize,
    train_set: &[Example],
    dev_set: &[Example],
    metric: &DevMetric,
) -> Result<(ModelParams, TrainReport)> {
    train_with(config, num_labels, train_set, dev_set, metric, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    config: &TrainConfig,
    num_labels: usize,
    train_set: &[Example],
    dev_set: &[Example],
    metric: &DevMetric,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    let train_set = subsample(train_set, config.subsample_fraction, config.seed)?;
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    let d_h = train_set[0].reps.d_h();
    let dims = config.dims(num_labels, d_h);
    let mut params = ModelParams::init(config.family, dims, config.seed);
    params.validate()?;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut epochs = Vec::new();
    let mut wait = 0;

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let mut rng = config.seed.stream(epoch as u64);
        order.shuffle(&mut rng);
        let lr = config.learning_rate / (1.0 + config.lr_decay * (epoch - 1) as f64);

        let mut total_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let loss = run_pool(config.threads, || {
                sgd_step(
                    &mut params,
                    &batch,
                    lr,
                    config.l2,
                    config.max_grad_norm,
                    config.threads,
                )
            })??;
            total_loss += loss;
            if params
                .fields()
                .any(|(_, d)| d.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::Diverged);
            }
        }

        let dev_score = if dev_set.is_empty() {
            f64::NAN
        } else {
            evaluate(&params, dev_set, metric)?
        };
        let record = EpochRecord {
            epoch,
            train_loss: total_loss / train_set.len() as f64,
            dev_score,
            seconds: start.elapsed().as_secs_f64(),
        };
        debug!(
            "epoch {epoch}: loss {:.5} dev {:.5}",
            record.train_loss, dev_score
        );
        on_epoch(&record);
        epochs.push(record);

        if dev_set.is_empty() {
            continue;
        }
        match &best {
            Some((_, score, _)) if dev_score <= *score => {
                wait += 1;
                if wait >= config.patience {
                    break;
                }
            }
            _ => {
                best = Some((epoch, dev_score, params.clone()));
                wait = 0;
            }
        }
    }

    let (best_epoch, best_dev_score, params) = match best {
        Some(b) => b,
        None => (epochs.len(), f64::NAN, params),
    };
    Ok((
        params,
        TrainReport {
            epochs,
            best_epoch,
            best_dev_score,
        },
    ))
}
