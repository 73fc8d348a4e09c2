//! Exact linear-chain inference over a [`ScoreLattice`].
//!
//! Forward and backward recursions run in log space. Position 0 reads row
//! 0 of the lattice, which holds the begin-of-sequence scores.

use crate::error::{Error, Result};
use crate::math::log_sum_exp_unchecked;
use crate::potentials::{LatticeGrad, ScoreLattice};

/// `p[i][a][b] = P(y_{i-1} = a, y_i = b | x)`; at position 0 the mass sits
/// in row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMarginals {
    pub probs: ScoreLattice,
}

impl PairwiseMarginals {
    pub fn get(&self, i: usize, a: usize, b: usize) -> f64 {
        self.probs.get(i, a, b)
    }

    /// `P(y_i = b | x)`.
    pub fn unary(&self, i: usize, b: usize) -> f64 {
        (0..self.probs.num_labels())
            .map(|a| self.probs.get(i, a, b))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub labels: Vec<usize>,
    /// Unnormalized path score.
    pub score: f64,
}

/// `alpha[i * L + b]`: log-sum of all prefixes ending in `b` at `i`.
fn forward(lat: &ScoreLattice) -> Vec<f64> {
    let (m, l) = (lat.len(), lat.num_labels());
    let mut alpha = vec![0.0; m * l];
    alpha[..l].copy_from_slice(lat.row(0, 0));
    let mut buf = vec![0.0; l];
    for i in 1..m {
        let (done, rest) = alpha.split_at_mut(i * l);
        let prev = &done[(i - 1) * l..];
        let cur = &mut rest[..l];
        for (b, out) in cur.iter_mut().enumerate() {
            for (a, slot) in buf.iter_mut().enumerate() {
                *slot = prev[a] + lat.get(i, a, b);
            }
            *out = log_sum_exp_unchecked(&buf);
        }
    }
    alpha
}

/// `beta[i * L + a]`: log-sum of all suffixes after position `i` given `a` at `i`.
fn backward(lat: &ScoreLattice) -> Vec<f64> {
    let (m, l) = (lat.len(), lat.num_labels());
    let mut beta = vec![0.0; m * l];
    let mut buf = vec![0.0; l];
    for i in (0..m.saturating_sub(1)).rev() {
        let (head, tail) = beta.split_at_mut((i + 1) * l);
        let next = &tail[..l];
        let cur = &mut head[i * l..];
        for (a, out) in cur.iter_mut().enumerate() {
            let row = lat.row(i + 1, a);
            for (b, slot) in buf.iter_mut().enumerate() {
                *slot = row[b] + next[b];
            }
            *out = log_sum_exp_unchecked(&buf);
        }
    }
    beta
}

fn log_z_from_alpha(alpha: &[f64], m: usize, l: usize) -> f64 {
    log_sum_exp_unchecked(&alpha[(m - 1) * l..m * l])
}

/// `log Σ_y exp(Σ_i s(x, y, i))`.
pub fn log_partition(lat: &ScoreLattice) -> f64 {
    let alpha = forward(lat);
    log_z_from_alpha(&alpha, lat.len(), lat.num_labels())
}

fn marginals_from(lat: &ScoreLattice, alpha: &[f64], beta: &[f64], log_z: f64) -> ScoreLattice {
    let (m, l) = (lat.len(), lat.num_labels());
    let mut p = ScoreLattice::zeros(m, l);
    for (b, &beta_b) in beta[..l].iter().enumerate() {
        p.set(0, 0, b, (lat.get(0, 0, b) + beta_b - log_z).exp());
    }
    for i in 1..m {
        for a in 0..l {
            let base = alpha[(i - 1) * l + a] - log_z;
            for b in 0..l {
                p.set(i, a, b, (base + lat.get(i, a, b) + beta[i * l + b]).exp());
            }
        }
    }
    p
}

pub fn pairwise_marginals(lat: &ScoreLattice) -> PairwiseMarginals {
    let alpha = forward(lat);
    let beta = backward(lat);
    let log_z = log_z_from_alpha(&alpha, lat.len(), lat.num_labels());
    PairwiseMarginals {
        probs: marginals_from(lat, &alpha, &beta, log_z),
    }
}

/// Highest-scoring path. Ties go to the lower label index, both for the
/// final label and at every backtrack step.
pub fn viterbi(lat: &ScoreLattice) -> DecodeResult {
    let (m, l) = (lat.len(), lat.num_labels());
    let mut delta = vec![0.0; m * l];
    let mut back = vec![0usize; m * l];
    delta[..l].copy_from_slice(lat.row(0, 0));
    for i in 1..m {
        for b in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for a in 0..l {
                let v = delta[(i - 1) * l + a] + lat.get(i, a, b);
                if v > best {
                    best = v;
                    arg = a;
                }
            }
            delta[i * l + b] = best;
            back[i * l + b] = arg;
        }
    }
    let last = &delta[(m - 1) * l..];
    let mut label = 0;
    for (b, &v) in last.iter().enumerate() {
        if v > last[label] {
            label = b;
        }
    }
    let score = last[label];
    let mut labels = vec![0; m];
    labels[m - 1] = label;
    for i in (1..m).rev() {
        labels[i - 1] = back[i * l + labels[i]];
    }
    DecodeResult { labels, score }
}

/// Independent per-position argmax, for lattices whose rows do not depend
/// on the previous label.
pub fn decode_softmax(lat: &ScoreLattice) -> DecodeResult {
    let labels: Vec<usize> = (0..lat.len())
        .map(|i| {
            let row = lat.row(i, 0);
            let mut best = 0;
            for (b, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = b;
                }
            }
            best
        })
        .collect();
    let score = lat.path_score(&labels);
    DecodeResult { labels, score }
}

/// `-log P(gold | x)` and its gradient with respect to every lattice entry.
pub fn nll_and_grad(lat: &ScoreLattice, gold: &[usize]) -> Result<(f64, LatticeGrad)> {
    let (m, l) = (lat.len(), lat.num_labels());
    if gold.len() != m {
        return Err(Error::DimensionMismatch {
            context: "gold length",
            expected: m,
            found: gold.len(),
        });
    }
    if let Some(&bad) = gold.iter().find(|&&y| y >= l) {
        return Err(Error::InvalidLabel {
            index: bad,
            num_labels: l,
        });
    }
    let alpha = forward(lat);
    let beta = backward(lat);
    let log_z = log_z_from_alpha(&alpha, m, l);
    let loss = log_z - lat.path_score(gold);
    let mut grad = marginals_from(lat, &alpha, &beta, log_z);
    for (i, &b) in gold.iter().enumerate() {
        let a = if i == 0 { 0 } else { gold[i - 1] };
        grad.add(i, a, b, -1.0);
    }
    Ok((loss.max(0.0), grad))
}
