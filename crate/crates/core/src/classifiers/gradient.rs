//! Mini-batch training loop shared by the SVM and MLP.

use rand::seq::SliceRandom;
use rand::Rng;

use super::optim::{Optimizer, OptimizerKind, PlateauScheduler};
use super::{argmax, ClassifierError, TrainingMetadata};
use crate::data::{MstLabel, NUM_CLASSES};
use crate::metrics;

pub(crate) struct EpochPlan {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub optimizer: OptimizerKind,
}

pub(crate) trait GradientModel {
    /// Accumulate the mean gradient over `rows` into `grads` (zeroed by the caller) and return
    /// the mean loss.
    fn batch(
        &self,
        params: &[f64],
        x: &[Vec<f64>],
        y: &[MstLabel],
        rows: &[usize],
        grads: &mut [f64],
    ) -> Result<f64, ClassifierError>;

    fn scores(&self, params: &[f64], x: &[f64]) -> [f64; NUM_CLASSES];
}

pub(crate) fn balanced_accuracy<M: GradientModel>(model: &M, params: &[f64], x: &[Vec<f64>], y: &[MstLabel]) -> f64 {
    let pred: Vec<MstLabel> = x.iter().map(|row| argmax(&model.scores(params, row))).collect();
    metrics::evaluate(y, &pred).map(|r| r.bacc).unwrap_or(0.0)
}

/// Runs `plan.epochs` epochs, halving the rate whenever the monitored bAcc plateaus. The
/// monitor is the validation set when given, otherwise the training set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit<M: GradientModel, R: Rng>(
    model: &M,
    params: &mut [f64],
    x: &[Vec<f64>],
    y: &[MstLabel],
    val: Option<(&[Vec<f64>], &[MstLabel])>,
    plan: &EpochPlan,
    rng: &mut R,
    metadata: &mut TrainingMetadata,
) -> Result<(), ClassifierError> {
    let (mx, my) = val.unwrap_or((x, y));
    let baseline = balanced_accuracy(model, params, mx, my);
    let mut scheduler = PlateauScheduler::new(plan.lr, plan.patience, baseline);
    let mut optimizer = Optimizer::new(plan.optimizer, params.len());
    let mut grads = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut last_loss = f64::NAN;
    for epoch in 0..plan.epochs {
        let lr = scheduler.lr();
        metadata.lr_history.push(lr);
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for (batch, rows) in order.chunks(plan.batch_size).enumerate() {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let diverged = ClassifierError::Diverged {
                epoch,
                batch,
                lr,
                last_loss,
            };
            let loss = match model.batch(params, x, y, rows, &mut grads) {
                Ok(l) if l.is_finite() => l,
                _ => return Err(diverged),
            };
            optimizer.step(params, &grads, lr);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(diverged);
            }
            last_loss = loss;
            epoch_loss += loss * rows.len() as f64;
        }
        metadata.train_loss.push(epoch_loss / x.len() as f64);
        let metric = balanced_accuracy(model, params, mx, my);
        metadata.val_history.push(metric);
        scheduler.observe(metric);
    }
    Ok(())
}
