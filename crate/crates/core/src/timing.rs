//! Wall-clock timing of training steps and decoding on random inputs.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{decode_softmax, viterbi};
use crate::math::RngSeed;
use crate::oracle::random_reps;
use crate::potentials::{Dims, FamilyTag, ModelParams, Scorer};
use crate::training::{sgd_step, Example};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchSpec {
    pub family: FamilyTag,
    pub num_labels: usize,
    pub d_h: usize,
    pub d_t: usize,
    pub d_r: usize,
    pub mlp_hidden: usize,
    pub len: usize,
    pub batch: usize,
    pub reps: usize,
    pub seed: RngSeed,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            family: FamilyTag::VanillaCrf,
            num_labels: 17,
            d_h: 100,
            d_t: 100,
            d_r: 128,
            mlp_hidden: 128,
            len: 30,
            batch: 32,
            reps: 10,
            seed: RngSeed(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchResult {
    pub family: FamilyTag,
    /// Mean seconds per minibatch SGD step (forward, backward, update).
    pub train_step_secs: f64,
    /// Mean seconds to score and decode one minibatch.
    pub decode_secs: f64,
    pub reps: usize,
}

/// Random batch with uniform gold labels.
pub fn random_batch(spec: &BenchSpec) -> Vec<Example> {
    let mut rng = spec.seed.stream(7);
    (0..spec.batch)
        .map(|_| Example {
            reps: random_reps(spec.len, spec.d_h, &mut rng),
            gold: (0..spec.len)
                .map(|_| rng.random_range(0..spec.num_labels))
                .collect(),
        })
        .collect()
}

fn decode_batch(params: &ModelParams, batch: &[Example]) -> Result<usize> {
    let scorer = Scorer::new(params)?;
    let mut checksum = 0;
    for ex in batch {
        let lat = scorer.score(&ex.reps)?;
        let labels = match params.family {
            FamilyTag::Softmax => decode_softmax(&lat).labels,
            _ => viterbi(&lat).labels,
        };
        checksum += labels[0];
    }
    Ok(checksum)
}

/// Runs one untimed warm-up, then `reps` timed training steps and `reps`
/// timed decodes of the same batch.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchResult> {
    if spec.reps == 0 || spec.batch == 0 || spec.len == 0 {
        return Err(Error::InvalidArgument(
            "reps, batch and len must be >= 1".into(),
        ));
    }
    let dims = Dims {
        num_labels: spec.num_labels,
        d_h: spec.d_h,
        d_t: spec.d_t,
        d_r: spec.d_r,
        mlp_hidden: spec.mlp_hidden,
    };
    let mut params = ModelParams::init(spec.family, dims, spec.seed);
    let batch = random_batch(spec);
    let refs: Vec<&Example> = batch.iter().collect();
    let lr = 1e-3;

    sgd_step(&mut params, &refs, lr, 0.0, None, 1)?;
    let start = Instant::now();
    for _ in 0..spec.reps {
        sgd_step(&mut params, &refs, lr, 0.0, None, 1)?;
    }
    let train_step_secs = start.elapsed().as_secs_f64() / spec.reps as f64;

    let mut sink = decode_batch(&params, &batch)?;
    let start = Instant::now();
    for _ in 0..spec.reps {
        sink = sink.wrapping_add(decode_batch(&params, &batch)?);
    }
    let decode_secs = start.elapsed().as_secs_f64() / spec.reps as f64;
    std::hint::black_box(sink);

    Ok(BenchResult {
        family: spec.family,
        train_step_secs,
        decode_secs,
        reps: spec.reps,
    })
}
