use rayon::prelude::*;

use super::features::SplitData;
use crate::error::{Error, Result};

/// Distance-weighted k-nearest-neighbour class scores for every query,
/// `n x q` row-major, usable wherever logits are.
pub fn knn_scores(train: &SplitData, queries: &SplitData, k: usize, q: usize) -> Result<Vec<f64>> {
    if k == 0 || train.is_empty() {
        return Err(Error::Domain("k-NN needs k >= 1 and a non-empty reference set".into()));
    }
    if train.sample_len != queries.sample_len {
        return Err(Error::Contract("k-NN feature lengths differ".into()));
    }
    let k = k.min(train.len());
    let rows: Vec<Vec<f64>> = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            let x = queries.sample(i);
            let mut dist: Vec<(f64, usize)> = (0..train.len())
                .map(|j| {
                    let d2 = x
                        .iter()
                        .zip(train.sample(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d2, j)
                })
                .collect();
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut scores = vec![0.0; q];
            for &(d2, j) in &dist[..k] {
                scores[train.labels[j]] += 1.0 / (d2.sqrt() + 1e-9);
            }
            scores
        })
        .collect();
    Ok(rows.concat())
}
