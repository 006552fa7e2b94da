use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::SplitData;
use super::metrics::topk_accuracy;
use crate::error::{Error, Result};
use crate::nn::{adam_step, lr_at_epoch, AdamConfig, Model, TrainConfig};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept: the best validation top-1, earliest on ties.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

/// Logits for every sample of a split.
pub fn predict(model: &Model, data: &SplitData) -> Result<Vec<f64>> {
    model.forward(&data.inputs, data.len())
}

/// Trains with Adam under the step schedule, reshuffling each epoch from
/// `cfg.seed`, and returns the parameters of the best validation epoch.
pub fn train_predictor(
    mut model: Model,
    train: &SplitData,
    val: &SplitData,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Training(format!(
            "empty split: {} training and {} validation samples",
            train.len(),
            val.len()
        )));
    }
    let q = model.num_classes();
    let d = train.sample_len;
    let adam = AdamConfig::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch_x = Vec::with_capacity(cfg.batch_size * d);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);
    let mut best: Option<(f64, Model)> = None;
    let mut epochs = Vec::with_capacity(cfg.total_epochs);
    let mut best_epoch = 0;

    for epoch in 0..cfg.total_epochs {
        let started = Instant::now();
        let lr = lr_at_epoch(cfg, epoch)?;
        order.shuffle(&mut rng_for(cfg.seed, &[stream::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(train.sample(i));
                batch_y.push(train.labels[i]);
            }
            let (loss, grads) = model.loss_and_grad(&batch_x, &batch_y)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut model.params, &grads, lr, adam)?;
        }
        let val_top1 = topk_accuracy(&predict(&model, val)?, &val.labels, q, 1)?;
        let train_loss = loss_sum / train.len() as f64;
        log::debug!(
            "epoch {epoch}: lr {lr:.1e} loss {train_loss:.4} val top-1 {val_top1:.2}% ({:.1}s)",
            started.elapsed().as_secs_f64()
        );
        if best.as_ref().is_none_or(|(b, _)| val_top1 > *b) {
            best = Some((val_top1, model.clone()));
            best_epoch = epoch;
        }
        epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_top1,
        });
    }
    let (_, best_model) = best.expect("at least one epoch");
    Ok((best_model, TrainHistory { epochs, best_epoch }))
}
