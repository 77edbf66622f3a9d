//! Minibatch training loop shared by the deep detectors.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Algorithm, Optimizer};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the training rows held out for early stopping when the
    /// caller supplies no validation set.
    pub validation_fraction: f64,
    pub optimizer: Algorithm,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            optimizer: Algorithm::adam(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Row order for one epoch with classes interleaved in proportion to their
/// sizes, so every minibatch carries roughly `N_j / N` of class `j`.
/// With a single class this is a plain shuffle of `0..n`.
pub fn stratified_order(labels: &[usize], rng: &mut util::Rng) -> Vec<usize> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    if n_classes == 1 {
        let mut order = std::mem::take(&mut members[0]);
        order.shuffle(rng);
        return order;
    }
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(labels.len());
    for (j, m) in members.iter_mut().enumerate() {
        m.shuffle(rng);
        let nj = m.len() as f64;
        for (r, &i) in m.iter().enumerate() {
            keyed.push(((r as f64 + 0.5) / nj, j, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// Splits an order into batches of `batch_size`; a trailing batch smaller
/// than two rows is merged into its predecessor (batch norm needs two).
pub fn batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

pub fn select_rows(data: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    data.select(Axis(0), rows)
}

/// A model trainable by [`fit`].
pub(crate) trait Trainable: Clone {
    /// One optimizer step on a minibatch; returns the minibatch loss.
    fn train_step(
        &mut self,
        batch: &Array2<f64>,
        labels: &[usize],
        optimizer: &mut Optimizer,
        rng: &mut util::Rng,
    ) -> Result<f64>;

    /// Full-data objective in inference mode.
    fn eval_loss(&self, data: ArrayView2<f64>, labels: &[usize]) -> Result<f64>;

    fn end_epoch(&mut self, _epoch: usize, _train: ArrayView2<f64>, _labels: &[usize]) -> Result<()> {
        Ok(())
    }

    /// Optional per-epoch diagnostic recorded in [`TrainLog::monitor`].
    fn monitor(&self, _train: ArrayView2<f64>) -> Result<Option<f64>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Loss of every minibatch, in order.
    pub batch_losses: Vec<f64>,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
    pub monitor: Vec<f64>,
}

/// Carves a deterministic validation subset off `train` when none is
/// given: `round(fraction * N_j)` random rows of every class, keeping at
/// least one training row per class.
pub(crate) fn holdout(
    train: ArrayView2<f64>,
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> (Array2<f64>, Vec<usize>, Array2<f64>, Vec<usize>) {
    let n = train.nrows();
    let no_holdout = || {
        (
            train.to_owned(),
            labels.to_vec(),
            Array2::zeros((0, train.ncols())),
            Vec::new(),
        )
    };
    if fraction <= 0.0 {
        return no_holdout();
    }
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    let mut rng = util::rng(seed);
    let mut is_val = vec![false; n];
    for m in members.iter_mut() {
        m.shuffle(&mut rng);
        let take = ((fraction * m.len() as f64).round() as usize).min(m.len().saturating_sub(1));
        for &i in &m[..take] {
            is_val[i] = true;
        }
    }
    let (val_idx, tr_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_val[i]);
    if val_idx.len() < 2 || tr_idx.len() < 2 {
        return no_holdout();
    }
    (
        select_rows(train, &tr_idx),
        tr_idx.iter().map(|&i| labels[i]).collect(),
        select_rows(train, &val_idx),
        val_idx.iter().map(|&i| labels[i]).collect(),
    )
}

/// Runs minibatch training with early stopping on the validation loss and
/// restores the best parameters. Without validation rows, the training
/// objective is used for model selection instead.
pub(crate) fn fit<T: Trainable>(
    model: &mut T,
    train: ArrayView2<f64>,
    labels: &[usize],
    validation: ArrayView2<f64>,
    validation_labels: &[usize],
    config: &TrainingConfig,
    seed: u64,
) -> Result<TrainLog> {
    config.validate()?;
    let mut rng = util::rng(seed);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut log = TrainLog {
        best_validation_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = model.clone();
    let mut since_best = 0;
    let mut last_finite: Option<usize> = None;
    for epoch in 0..config.max_epochs {
        let order = stratified_order(labels, &mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for rows in batches(&order, config.batch_size) {
            let batch = select_rows(train, &rows);
            let batch_labels: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
            let loss = model.train_step(&batch, &batch_labels, &mut optimizer, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_epoch: last_finite,
                });
            }
            log.batch_losses.push(loss);
            total += loss;
            count += 1;
        }
        model.end_epoch(epoch, train, labels)?;
        if let Some(m) = model.monitor(train)? {
            log.monitor.push(m);
        }
        log.epoch_losses.push(total / count.max(1) as f64);

        let monitored = if validation.nrows() > 0 {
            model.eval_loss(validation, validation_labels)?
        } else {
            model.eval_loss(train, labels)?
        };
        if !monitored.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite_epoch: last_finite,
            });
        }
        last_finite = Some(epoch);
        log.validation_losses.push(monitored);
        if monitored < log.best_validation_loss {
            log.best_validation_loss = monitored;
            log.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    if config.max_epochs > 0 {
        *model = best;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_merge_singleton_tail() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.len(), 2);
        assert_eq!(b[1], vec![4, 5, 6, 7, 8]);
        assert_eq!(batches(&order, 3).len(), 3);
    }

    #[test]
    fn single_class_order_is_plain_shuffle() {
        let labels = vec![0; 20];
        let mut r1 = util::rng(5);
        let mut r2 = util::rng(5);
        let mut expected: Vec<usize> = (0..20).collect();
        expected.shuffle(&mut r2);
        assert_eq!(stratified_order(&labels, &mut r1), expected);
    }

    #[test]
    fn stratified_batches_are_proportional() {
        // 60 of class 0, 20 of class 1, 20 of class 2; batches of 10
        let mut labels = vec![0; 60];
        labels.extend(vec![1; 20]);
        labels.extend(vec![2; 20]);
        let mut rng = util::rng(1);
        let order = stratified_order(&labels, &mut rng);
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        for b in batches(&order, 10) {
            let c1 = b.iter().filter(|&&i| labels[i] == 1).count();
            let c0 = b.iter().filter(|&&i| labels[i] == 0).count();
            assert_eq!(c1, 2);
            assert_eq!(c0, 6);
        }
    }

    #[test]
    fn holdout_keeps_class_balance() {
        let data = Array2::from_shape_fn((100, 2), |(i, j)| (i + j) as f64);
        let mut labels = vec![0; 50];
        labels.extend(vec![1; 50]);
        let (tr, trl, va, val) = holdout(data.view(), &labels, 0.1, 3);
        assert_eq!(tr.nrows(), 90);
        assert_eq!(va.nrows(), 10);
        assert_eq!(val.iter().filter(|&&y| y == 1).count(), 5);
        assert_eq!(trl.len(), 90);
    }
}
