use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank of the label within its logit row: the number of classes that beat
/// it, where equal scores are won by the lower index.
fn label_rank(row: &[f64], label: usize) -> usize {
    let z = row[label];
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v > z || (v == z && j < label))
        .count()
}

fn check(logits: &[f64], labels: &[usize], q: usize) -> Result<()> {
    if q == 0 || logits.len() != labels.len() * q {
        return Err(Error::Contract(format!(
            "{} logits for {} labels over {q} classes",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= q) {
        return Err(Error::Contract(format!("label {l} outside [0, {q})")));
    }
    Ok(())
}

/// Percentage of rows whose label is among the `k` highest logits.
pub fn topk_accuracy(logits: &[f64], labels: &[usize], q: usize, k: usize) -> Result<f64> {
    if k == 0 || k > q {
        return Err(Error::Domain(format!("k = {k} outside [1, {q}]")));
    }
    check(logits, labels, q)?;
    if labels.is_empty() {
        return Err(Error::Contract("no samples to score".into()));
    }
    let hits = logits
        .chunks_exact(q)
        .zip(labels)
        .filter(|(row, &l)| label_rank(row, l) < k)
        .count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub samples: usize,
    /// `confusion[true][predicted]` counts of top-1 predictions.
    pub confusion: Vec<Vec<u32>>,
}

impl Metrics {
    pub fn evaluate(logits: &[f64], labels: &[usize], q: usize) -> Result<Self> {
        check(logits, labels, q)?;
        let top = |k: usize| topk_accuracy(logits, labels, q, k.min(q));
        let mut confusion = vec![vec![0u32; q]; q];
        for (row, &l) in logits.chunks_exact(q).zip(labels) {
            confusion[l][argmax(row)] += 1;
        }
        Ok(Self {
            top1: top(1)?,
            top2: top(2)?,
            top3: top(3)?,
            samples: labels.len(),
            confusion,
        })
    }

    pub fn is_monotone(&self) -> bool {
        (0.0..=100.0).contains(&self.top1) && self.top1 <= self.top2 && self.top2 <= self.top3 && self.top3 <= 100.0
    }
}
