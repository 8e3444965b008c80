//! Ranked-retrieval metrics over fold predictions.

use crate::error::{Error, Result};

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Average precision of one class: samples ranked by `scores` descending
/// (stable, so ties keep input order), precision accumulated at each position
/// holding a true `class` label. `None` when the class never occurs.
pub fn average_precision(scores: &[f64], labels: &[usize], class: usize) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l == class).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] == class {
            hits += 1;
            precision_sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(precision_sum / positives as f64)
}

/// Macro-averaged average precision over the classes present. Rows hold the
/// softmax class scores; per class, samples are ranked by that class's score.
/// Callers with raw logits must softmax first, so a score file round-trip
/// computes the same value.
///
/// # Errors
/// Fails on an empty prediction list.
pub fn mean_average_precision(predictions: &[([f64; 3], usize)]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::metric("mean average precision needs at least one prediction"));
    }
    let labels: Vec<usize> = predictions.iter().map(|(_, l)| *l).collect();
    let mut total = 0.0;
    let mut classes = 0usize;
    for class in 0..3 {
        let scores: Vec<f64> = predictions.iter().map(|(s, _)| s[class]).collect();
        if let Some(ap) = average_precision(&scores, &labels, class) {
            total += ap;
            classes += 1;
        }
    }
    Ok(total / classes as f64)
}

/// Fraction of predictions whose top logit matches the label. Ties go to the
/// lowest class index, deterministically.
///
/// # Errors
/// Fails on an empty prediction list.
pub fn accuracy(predictions: &[([f64; 3], usize)]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::metric("accuracy needs at least one prediction"));
    }
    let correct = predictions
        .iter()
        .filter(|(logits, label)| {
            let mut best = 0usize;
            for c in 1..3 {
                if logits[c] > logits[best] {
                    best = c;
                }
            }
            best == *label
        })
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}
