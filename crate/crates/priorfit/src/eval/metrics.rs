//! Classification metrics: one-vs-one ROC AUC, cross-entropy, accuracy.

use crate::error::{Error, Result};

/// Mann-Whitney AUC of `pos_scores` against `neg_scores`, ties half-credit.
fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0f64;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// One-vs-one ROC AUC. Binary tasks use the positive-class probability;
/// multi-class averages the two directed AUCs of every class pair, each
/// computed only on rows of those two classes. Pairs missing a class are
/// skipped; when every pair is skipped the metric is undefined.
pub fn roc_auc_ovo(y_true: &[u16], probabilities: &[Vec<f32>]) -> Result<f64> {
    if y_true.len() != probabilities.len() || y_true.is_empty() {
        return Err(Error::Contract(format!(
            "{} labels vs {} probability rows",
            y_true.len(),
            probabilities.len()
        )));
    }
    let n_classes = probabilities[0].len();
    if probabilities.iter().any(|r| r.len() != n_classes) {
        return Err(Error::Contract("ragged probability rows".into()));
    }
    let mut pair_aucs = Vec::new();
    for a in 0..n_classes {
        for b in (a + 1)..n_classes {
            let scores_of = |cls: usize, other: usize| -> (Vec<f64>, Vec<f64>) {
                let mut pos = Vec::new();
                let mut neg = Vec::new();
                for (&y, p) in y_true.iter().zip(probabilities.iter()) {
                    if y as usize == cls {
                        pos.push(p[cls] as f64);
                    } else if y as usize == other {
                        neg.push(p[cls] as f64);
                    }
                }
                (pos, neg)
            };
            let (pos_a, neg_a) = scores_of(a, b);
            if pos_a.is_empty() || neg_a.is_empty() {
                continue;
            }
            let (pos_b, neg_b) = scores_of(b, a);
            let auc_ab = pairwise_auc(&pos_a, &neg_a);
            let auc_ba = pairwise_auc(&pos_b, &neg_b);
            pair_aucs.push(0.5 * (auc_ab + auc_ba));
        }
    }
    if pair_aucs.is_empty() {
        return Err(Error::UndefinedMetric(
            "no class pair has rows of both classes".into(),
        ));
    }
    Ok(pair_aucs.iter().sum::<f64>() / pair_aucs.len() as f64)
}

/// Mean negative log probability of the true class, floored at 1e-12.
pub fn cross_entropy(y_true: &[u16], probabilities: &[Vec<f32>]) -> Result<f64> {
    if y_true.len() != probabilities.len() || y_true.is_empty() {
        return Err(Error::Contract("label/probability shape mismatch".into()));
    }
    let mut total = 0.0f64;
    for (&y, p) in y_true.iter().zip(probabilities.iter()) {
        let v = p
            .get(y as usize)
            .copied()
            .ok_or_else(|| Error::Contract(format!("label {y} outside probability row")))?;
        total -= (v as f64).max(1e-12).ln();
    }
    Ok(total / y_true.len() as f64)
}

/// Fraction of rows whose argmax matches; argmax ties go to the lowest class.
pub fn accuracy(y_true: &[u16], probabilities: &[Vec<f32>]) -> Result<f64> {
    if y_true.len() != probabilities.len() || y_true.is_empty() {
        return Err(Error::Contract("label/probability shape mismatch".into()));
    }
    let mut hits = 0usize;
    for (&y, p) in y_true.iter().zip(probabilities.iter()) {
        let mut best = 0usize;
        for (c, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = c;
            }
        }
        if best == y as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / y_true.len() as f64)
}
