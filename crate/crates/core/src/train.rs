//! Mini-batch training loops with early stopping on validation F1.

use alloc::format;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fusion::{FusionModel, Optimizer, ParamGroup, Strategy};
use crate::metrics::{confusion, f1, MetricsReport};
use crate::neural::cross_entropy;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Decision threshold on the positive-class probability.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without a validation-F1 improvement.
    pub patience: Option<usize>,
    pub shuffle_seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            patience: Some(10),
            shuffle_seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of the learning curve. Epoch 0 is the untrained model, with its
/// mean evaluation-mode loss over the training split.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Snapshot with the highest validation F1 (earliest on ties).
    pub best: FusionModel,
}

/// Positive-class probabilities for every image, in order.
pub fn predict<E: Executor>(model: &FusionModel, dataset: &LabeledDataset, exec: &E) -> Result<Vec<f64>> {
    exec.map(dataset.len(), |i| model.predict_proba(&dataset.image(i)))
        .into_iter()
        .collect()
}

/// Full metrics report on one split.
pub fn evaluate<E: Executor>(
    model: &FusionModel,
    dataset: &LabeledDataset,
    seed: Option<u64>,
    exec: &E,
) -> Result<MetricsReport> {
    let scores = predict(model, dataset, exec)?;
    MetricsReport::from_scores(dataset.split().name(), seed, dataset.labels(), &scores, THRESHOLD)
}

/// Accuracy and F1 only; unlike [`evaluate`] this accepts single-class
/// splits.
pub(crate) fn accuracy_f1(labels: &[u8], scores: &[f64]) -> Result<(f64, f64)> {
    let predictions: Vec<u8> = scores.iter().map(|&s| u8::from(s >= THRESHOLD)).collect();
    let c = confusion(labels, &predictions)?;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Ok((ratio(c.tp + c.tn, c.total()), f1(precision, recall)))
}

/// One optimisation step on a batch of images, any strategy. Under static
/// fusion only the handler moves.
pub fn train_step<E: Executor>(
    model: &mut FusionModel,
    opt: &mut Optimizer,
    images: &[Tensor],
    labels: &[u8],
    exec: &E,
) -> Result<f64> {
    let batch = model.batch_gradients(images, labels, exec)?;
    let only = (model.strategy() == Strategy::Shf).then_some(ParamGroup::Handler);
    opt.step(model, &batch.grads, only)?;
    model.update_running_stats(&batch);
    Ok(batch.loss)
}

/// Joint end-to-end step: concatenation fusion, gradients into both
/// branches and the handler.
pub fn dhf_step<E: Executor>(
    model: &mut FusionModel,
    opt: &mut Optimizer,
    images: &[Tensor],
    labels: &[u8],
    exec: &E,
) -> Result<f64> {
    require(model, Strategy::Dhf)?;
    train_step(model, opt, images, labels, exec)
}

/// As [`dhf_step`] with the quantum half scaled by `γ`, which is updated
/// by the handler's optimiser settings.
pub fn tshf_step<E: Executor>(
    model: &mut FusionModel,
    opt: &mut Optimizer,
    images: &[Tensor],
    labels: &[u8],
    exec: &E,
) -> Result<f64> {
    require(model, Strategy::Tshf)?;
    train_step(model, opt, images, labels, exec)
}

fn require(model: &FusionModel, strategy: Strategy) -> Result<()> {
    if model.strategy() != strategy {
        return Err(Error::InvalidConfig(format!(
            "{strategy} step called on a {} model",
            model.strategy()
        )));
    }
    Ok(())
}

/// What the epoch loop needs from a training setup.
pub(crate) trait Trainee {
    fn model(&self) -> &FusionModel;
    fn step(&mut self, indices: &[usize]) -> Result<f64>;
    fn initial_loss(&self) -> Result<f64>;
    fn validation(&self) -> Result<(f64, f64)>;
    /// Smallest batch the model can take (2 with batch normalisation).
    fn min_batch(&self) -> usize {
        let m = self.model();
        if m.bn_quantum.is_some() || m.bn_classical.is_some() {
            2
        } else {
            1
        }
    }
}

pub(crate) fn epoch_loop<T: Trainee>(t: &mut T, n: usize, options: &TrainOptions) -> Result<FitOutcome> {
    options.validate()?;
    if n < t.min_batch() {
        return Err(Error::InvalidConfig(format!("training split has {n} samples")));
    }
    let (acc, f) = t.validation()?;
    let mut history = Vec::with_capacity(options.epochs + 1);
    history.push(EpochRecord {
        epoch: 0,
        train_loss: t.initial_loss()?,
        val_accuracy: acc,
        val_f1: f,
        gamma: t.model().gamma,
    });
    let mut best = t.model().clone();
    let mut best_epoch = 0;
    let mut best_f1 = f;
    let mut rng = SplitMix64::new(options.shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_no = 0;
    for epoch in 1..=options.epochs {
        rng.shuffle(&mut order);
        let batches = batch_ranges(n, options.batch_size, t.min_batch());
        let mut total = 0.0;
        for &(lo, hi) in &batches {
            let loss = t.step(&order[lo..hi]).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss { batch: batch_no },
                other => other,
            })?;
            total += loss * (hi - lo) as f64;
            batch_no += 1;
        }
        let (acc, f) = t.validation()?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / n as f64,
            val_accuracy: acc,
            val_f1: f,
            gamma: t.model().gamma,
        });
        if f > best_f1 {
            best_f1 = f;
            best_epoch = epoch;
            best = t.model().clone();
        }
        if options.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }
    Ok(FitOutcome {
        history,
        best_epoch,
        best,
    })
}

/// Consecutive `[lo, hi)` ranges; a short tail below `min` joins the
/// previous batch.
fn batch_ranges(n: usize, size: usize, min: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(size).map(|lo| (lo, (lo + size).min(n))).collect();
    if out.len() > 1 {
        let (lo, hi) = out[out.len() - 1];
        if hi - lo < min {
            out.pop();
            out.last_mut().expect("len > 1").1 = n;
        }
    }
    out
}

struct ImageTrainee<'a, E: Executor> {
    model: &'a mut FusionModel,
    opt: &'a mut Optimizer,
    train: &'a LabeledDataset,
    val: &'a LabeledDataset,
    exec: &'a E,
}

impl<E: Executor> Trainee for ImageTrainee<'_, E> {
    fn model(&self) -> &FusionModel {
        self.model
    }

    fn step(&mut self, indices: &[usize]) -> Result<f64> {
        let images: Vec<Tensor> = indices.iter().map(|&i| self.train.image(i)).collect();
        let labels: Vec<u8> = indices.iter().map(|&i| self.train.label(i)).collect();
        train_step(self.model, self.opt, &images, &labels, self.exec)
    }

    fn initial_loss(&self) -> Result<f64> {
        let losses = self.exec.map(self.train.len(), |i| -> Result<f64> {
            Ok(cross_entropy(self.model.logits(&self.train.image(i))?, self.train.label(i))?.0)
        });
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / self.train.len() as f64)
    }

    fn validation(&self) -> Result<(f64, f64)> {
        accuracy_f1(self.val.labels(), &predict(self.model, self.val, self.exec)?)
    }
}

/// Trains `model` in place for up to `options.epochs` epochs. The returned
/// history starts with the untrained model at epoch 0.
pub fn fit<E: Executor>(
    model: &mut FusionModel,
    opt: &mut Optimizer,
    train: &LabeledDataset,
    val: &LabeledDataset,
    options: &TrainOptions,
    exec: &E,
) -> Result<FitOutcome> {
    let n = train.len();
    let mut t = ImageTrainee {
        model,
        opt,
        train,
        val,
        exec,
    };
    epoch_loop(&mut t, n, options)
}
