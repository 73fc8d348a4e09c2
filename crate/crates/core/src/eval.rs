//! Span-level precision/recall/F1 (conlleval-style micro average) and token
//! accuracy.

use std::fmt;

use serde::Serialize;

use crate::data::spans_from_bioes;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub token_accuracy: f64,
    pub gold_spans: usize,
    pub predicted_spans: usize,
    pub correct_spans: usize,
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "precision={:.4} recall={:.4} f1={:.4} acc={:.4}",
            self.precision, self.recall, self.f1, self.token_accuracy
        )
    }
}

/// Micro-averaged span scores over a corpus of BIOES label sequences.
///
/// A predicted span counts only if start, end and type all match. With no
/// predicted spans precision is 0.
pub fn span_f1<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    pred: &[Vec<T>],
) -> Result<EvalResult> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            index: gold.len().min(pred.len()),
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let (mut n_gold, mut n_pred, mut n_correct) = (0, 0, 0);
    let (mut tokens, mut matching) = (0usize, 0usize);
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::LengthMismatch {
                index,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let gs = spans_from_bioes(g);
        let ps = spans_from_bioes(p);
        n_gold += gs.len();
        n_pred += ps.len();
        n_correct += gs.intersection(&ps).count();
        tokens += g.len();
        matching += g
            .iter()
            .zip(p)
            .filter(|(a, b)| a.as_ref() == b.as_ref())
            .count();
    }
    let precision = if n_pred > 0 {
        n_correct as f64 / n_pred as f64
    } else {
        0.0
    };
    let recall = if n_gold > 0 {
        n_correct as f64 / n_gold as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let token_accuracy = if tokens > 0 {
        matching as f64 / tokens as f64
    } else {
        0.0
    };
    Ok(EvalResult {
        precision,
        recall,
        f1,
        token_accuracy,
        gold_spans: n_gold,
        predicted_spans: n_pred,
        correct_spans: n_correct,
    })
}

/// Fraction of positions where the label ids agree.
pub fn token_accuracy(gold: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<f64> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::LengthMismatch {
                index,
                gold: g.len(),
                pred: p.len(),
            });
        }
        total += g.len();
        hits += g.iter().zip(p).filter(|(a, b)| a == b).count();
    }
    Ok(if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    })
}

/// Mean and population standard deviation.
pub fn mean_and_std(scores: &[f64]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::EmptyReduction);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn perfect_prediction() {
        let gold = vec![s(&["B-PER", "E-PER", "O", "S-LOC"])];
        let r = span_f1(&gold, &gold).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert_eq!(r.token_accuracy, 1.0);
    }

    #[test]
    fn empty_prediction() {
        let gold = vec![s(&["B-PER", "E-PER", "O"])];
        let pred = vec![s(&["O", "O", "O"])];
        let r = span_f1(&gold, &pred).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!(r.predicted_spans, 0);
    }

    #[test]
    fn half_correct() {
        let gold = vec![s(&["S-PER", "O", "S-LOC"])];
        let pred = vec![s(&["S-PER", "S-ORG", "O"])];
        let r = span_f1(&gold, &pred).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert_eq!(r.correct_spans, 1);
        assert!((r.token_accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_names_sequence() {
        let gold = vec![s(&["O"]), s(&["O", "O"])];
        let pred = vec![s(&["O"]), s(&["O"])];
        assert!(matches!(
            span_f1(&gold, &pred),
            Err(Error::LengthMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_and_std(&[1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        assert_eq!(mean_and_std(&[0.0, 2.0]).unwrap(), (1.0, 1.0));
        let (m, sd) = mean_and_std(&[91.33; 5]).unwrap();
        assert!((m - 91.33).abs() < 1e-12 && sd < 1e-12);
        assert!(mean_and_std(&[]).is_err());
    }

    fn tags() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::sample::select(vec!["O", "B-A", "I-A", "E-A", "S-A", "S-B", "B-B", "E-B"]),
            1..12,
        )
        .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn f1_is_symmetric_and_bounded(pairs in prop::collection::vec((tags(), tags()), 1..5)) {
            let gold: Vec<Vec<String>> = pairs.iter().map(|(g, _)| g.clone()).collect();
            let pred: Vec<Vec<String>> = pairs
                .iter()
                .map(|(g, p)| p.iter().cycle().take(g.len()).cloned().collect())
                .collect();
            let a = span_f1(&gold, &pred).unwrap();
            let b = span_f1(&pred, &gold).unwrap();
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
            prop_assert!((a.precision - b.recall).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.f1));
            prop_assert!(a.correct_spans <= a.gold_spans.min(a.predicted_spans));
            let all_equal = gold.iter().zip(&pred).all(|(g, p)| spans_from_bioes(g) == spans_from_bioes(p));
            if a.gold_spans > 0 || a.predicted_spans > 0 {
                prop_assert_eq!(a.f1 == 1.0, all_equal);
            }
        }
    }
}
