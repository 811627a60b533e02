use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mask::SpectralMask;
use crate::mixer::TrainingItem;
use crate::tensor::{bce_value, init, Adam, AdamConfig, ParamSource, Tape};

use super::network::AvModel;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub patience: usize,
    pub factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 3e-4,
            seed: 0,
            patience: 3,
            factor: 0.5,
        }
    }
}

/// Halves the learning rate after `patience` consecutive epochs without a
/// strict improvement on the best loss so far, then starts counting again.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64) -> Self {
        PlateauScheduler {
            patience,
            factor,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn step(&mut self, loss: f64, lr: f64) -> f64 {
        match self.best {
            Some(b) if !(loss < b) => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    self.bad_epochs = 0;
                    return lr * self.factor;
                }
                lr
            }
            _ => {
                self.best = Some(loss);
                self.bad_epochs = 0;
                lr
            }
        }
    }
}

/// The learning rate to use after the last of `val_losses`, given the rate
/// in effect while it was measured.
pub fn lr_schedule(val_losses: &[f64], current_lr: f64) -> f64 {
    let mut s = PlateauScheduler::new(3, 0.5);
    let mut next = current_lr;
    for &l in val_losses {
        next = s.step(l, current_lr);
    }
    next
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_bce: f64,
    pub val_bce: f64,
    pub lr: f64,
}

/// Epoch 0 holds the losses of the untrained model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn initial_train_bce(&self) -> Option<f64> {
        self.records.first().map(|r| r.train_bce)
    }

    pub fn final_train_bce(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_bce)
    }

    /// One `epoch train_bce val_bce lr` line per record, tab separated.
    pub fn to_log(&self) -> String {
        let mut s = String::from("epoch\ttrain_bce\tval_bce\tlr\n");
        for r in &self.records {
            s.push_str(&format!("{}\t{:.6}\t{:.6}\t{:e}\n", r.epoch, r.train_bce, r.val_bce, r.lr));
        }
        s
    }
}

fn item_loss(model: &AvModel, item: &TrainingItem) -> Result<f64> {
    let mask = model.predict_masks(&item.noisy_mag, Some(&item.embeddings))?;
    Ok(bce_value(mask.values().data(), item.ibm.values().data()))
}

/// Mean BCE of the model's soft masks against the oracle masks.
pub fn evaluate_bce(model: &AvModel, items: &[TrainingItem]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Usage("evaluation set is empty".into()));
    }
    let mut total = 0.0;
    for it in items {
        total += item_loss(model, it)?;
    }
    Ok(total / items.len() as f64)
}

/// Mean per-item fraction of bins where the binarized prediction equals the
/// oracle mask.
pub fn frame_accuracy(model: &AvModel, items: &[TrainingItem], threshold: f64) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Usage("evaluation set is empty".into()));
    }
    let mut total = 0.0;
    for it in items {
        let m: SpectralMask = model.predict_masks(&it.noisy_mag, Some(&it.embeddings))?;
        total += m.accuracy_against(&it.ibm, threshold)?;
    }
    Ok(total / items.len() as f64)
}

/// Adam on per-item BCE with one item per step, shuffled each epoch. The
/// validation loss drives the plateau schedule; without a validation set the
/// epoch's training loss does.
pub fn train(
    mut model: AvModel,
    train_set: &[TrainingItem],
    val_set: &[TrainingItem],
    cfg: &TrainConfig,
) -> Result<(AvModel, History)> {
    if train_set.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    })?;
    let mut sched = PlateauScheduler::new(cfg.patience, cfg.factor);
    let mut history = History::default();
    let initial_train = evaluate_bce(&model, train_set)?;
    let initial_val = if val_set.is_empty() {
        initial_train
    } else {
        evaluate_bce(&model, val_set)?
    };
    history.records.push(EpochRecord {
        epoch: 0,
        train_bce: initial_train,
        val_bce: initial_val,
        lr: adam.lr(),
    });
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = init::derived(cfg.seed, epoch as u64);
        order.shuffle(&mut rng);
        let lr_used = adam.lr();
        let mut sum = 0.0;
        for &i in &order {
            let item = &train_set[i];
            let mut tape = Tape::new();
            let vars = tape.params_from(model.weights());
            let fwd = model.record(&mut tape, &item.noisy_mag, Some(&item.embeddings), &ParamSource::Trainable(vars))?;
            let loss = tape.bce(fwd.mask, item.ibm.values())?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            sum += value;
            let grads = tape.backward(loss, model.weights())?;
            adam.step(model.weights_mut(), &grads)?;
        }
        let train_bce = sum / order.len() as f64;
        let val_bce = if val_set.is_empty() {
            train_bce
        } else {
            evaluate_bce(&model, val_set)?
        };
        history.records.push(EpochRecord {
            epoch,
            train_bce,
            val_bce,
            lr: lr_used,
        });
        let next = sched.step(val_bce, adam.lr());
        adam.set_lr(next);
    }
    Ok((model, history))
}
