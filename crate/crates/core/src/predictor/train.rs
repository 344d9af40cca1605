//! Mini-batch gradient descent with momentum and early stopping.

use rand::seq::SliceRandom;

use super::data::SequenceSample;
use super::network::{DropoutMask, Network};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Channel dropout probability during training.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 4,
            max_epochs: 100,
            patience: 10,
            dropout: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss; entry 0 is measured before the first update.
    pub val_loss: Vec<f64>,
    /// Epoch whose parameters were kept (0 means the initial ones).
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

fn validation_loss(net: &Network, frames: &[Vec<f64>], val: &[SequenceSample]) -> Result<f64> {
    let mut sum = 0.0;
    for s in val {
        let (x, y) = gather_owned(s, frames);
        sum += net.loss(&x, &y, None)?;
    }
    Ok(sum / val.len() as f64)
}

fn gather_owned(s: &SequenceSample, frames: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (x, y) = s.gather(frames);
    (
        x.into_iter().cloned().collect(),
        y.into_iter().cloned().collect(),
    )
}

/// Trains `net` on normalised `frames` and leaves it holding the
/// parameters with the lowest validation loss.
pub fn train(
    net: &mut Network,
    frames: &[Vec<f64>],
    train: &[SequenceSample],
    val: &[SequenceSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Invalid(
            "training needs at least one training and one validation sample".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Invalid(format!("dropout must lie in [0, 1), got {}", cfg.dropout)));
    }
    if let Some(s) = train.iter().chain(val).find(|s| s.last_index() >= frames.len()) {
        return Err(Error::OutOfRange {
            index: s.last_index(),
            len: frames.len(),
        });
    }
    let mut rng = rng::stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut velocity = vec![0.0; net.param_count()];
    let mut best = net.params.clone();
    let mut best_val = validation_loss(net, frames, val)?;
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: vec![best_val],
        best_epoch: 0,
        epochs_run: 0,
        stopped_early: false,
    };
    let mut stagnant = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; net.param_count()];
            for &i in batch {
                let (x, y) = gather_owned(&train[i], frames);
                let mask = (cfg.dropout > 0.0)
                    .then(|| DropoutMask::sample(&net.config, cfg.dropout, &mut rng));
                let (loss, g) = net.loss_and_gradient(&x, &y, mask.as_ref())?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss });
                }
                epoch_loss += loss;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                *p += *v;
            }
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = validation_loss(net, frames, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: val_loss,
            });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.epochs_run = epoch;
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
        if val_loss < best_val {
            best_val = val_loss;
            best.copy_from_slice(&net.params);
            report.best_epoch = epoch;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    net.params = best;
    Ok(report)
}
