//! The training loop: age-group-balanced pair batches, MAE relation loss,
//! Adam with the halving schedule, a non-finite guard, and per-epoch
//! validation MAEs for the training-curve logs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_pair_batch, ImageData, Subject};
use crate::error::{Error, Result};
use crate::experiments::loss::relation_loss;
use crate::model::PairModel32;
use crate::numerics::{AdamState, Graph};
use crate::relations::ground_truth_relations;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rate halves every this many epochs.
    pub half_period: usize,
    pub base_lr: f64,
    /// Pairs per training step.
    pub batch_size: usize,
    /// Steps per epoch; each step consumes 2 * batch_size images, so the
    /// default ceil(n_train / (2 * batch_size)) makes one epoch pass over
    /// roughly the whole training set.
    pub steps_per_epoch: Option<usize>,
    /// Worker threads for the convolution kernels.
    pub threads: usize,
    /// Allow x = y in training pairs (off by default; self pairs appear only
    /// at evaluation).
    pub allow_self_pairs: bool,
    /// Pairs drawn from the validation fold for the per-epoch relation MAEs.
    pub val_pairs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            half_period: 15,
            base_lr: 1e-4,
            batch_size: 20,
            steps_per_epoch: None,
            threads: default_threads(),
            allow_self_pairs: false,
            val_pairs: 50,
            seed: 0,
        }
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get().min(8))
        .unwrap_or(1)
}

impl TrainConfig {
    /// The full-scale preset: 80 epochs, halving every 35.
    pub fn paper_schedule(mut self) -> Self {
        self.epochs = 80;
        self.half_period = 35;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.half_period == 0 {
            return Err(Error::Config("half_period must be positive".into()));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        Ok(())
    }
}

/// One line of the training curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Validation MAE per relation, in subset order (empty if no validation
    /// fold was supplied).
    pub val_mae: Vec<f64>,
}

/// Stable per-stream seed derivation (splitmix64 over seed ^ stream).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn targets_for(
    model: &PairModel32,
    subjects: &[Subject],
    pairs: &[(usize, usize)],
    max_age: f64,
) -> Result<Vec<Vec<f32>>> {
    let mut targets = vec![Vec::with_capacity(pairs.len()); model.head.relation_subset.len()];
    for &(xi, yi) in pairs {
        let rel = ground_truth_relations(subjects[xi].tau, subjects[yi].tau, max_age)?;
        for (slot, r) in model.head.relation_subset.iter().enumerate() {
            targets[slot].push(rel.get(*r).expect("trainable relation") as f32);
        }
    }
    Ok(targets)
}

/// Train `model` in place, starting at `start_epoch` (non-zero when resuming
/// from a checkpoint). All randomness is derived from (seed, epoch), so a
/// resumed run reproduces the uninterrupted trajectory.
#[allow(clippy::too_many_arguments)]
pub fn train_model(
    model: &mut PairModel32,
    adam: &mut AdamState<f32>,
    train: &[Subject],
    val: &[Subject],
    cfg: &TrainConfig,
    start_epoch: usize,
    max_age: f64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if start_epoch > cfg.epochs {
        return Err(Error::Config(format!(
            "start epoch {start_epoch} beyond schedule of {} epochs",
            cfg.epochs
        )));
    }
    let steps = cfg
        .steps_per_epoch
        .unwrap_or_else(|| train.len().div_ceil(2 * cfg.batch_size));
    let mut logs = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2 * epoch as u64));
        let mut loss_sum = 0.0f64;
        for step in 0..steps {
            let pairs = sample_pair_batch(
                train,
                cfg.batch_size,
                max_age,
                cfg.allow_self_pairs,
                &mut rng,
            )?;
            let xs: Vec<&ImageData> = pairs.iter().map(|&(x, _)| &train[x].image).collect();
            let ys: Vec<&ImageData> = pairs.iter().map(|&(_, y)| &train[y].image).collect();
            let targets = targets_for(model, train, &pairs, max_age)?;

            let mut g = Graph::with_threads(cfg.threads);
            let preds = model.forward_pair_batch(&mut g, &xs, &ys, true)?;
            let loss = relation_loss(&mut g, &preds.per_relation, &targets)?;
            let loss_value = g.scalar(loss) as f64;
            if !loss_value.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    step,
                    value: loss_value,
                });
            }
            loss_sum += loss_value;
            g.backward(loss)?;
            model.store.accumulate_grads(&g, &preds.bindings);
            adam.step(&mut model.store, epoch)?;
        }

        let val_mae = validation_relation_mae(model, val, cfg, epoch, max_age)?;
        let log = EpochLog {
            epoch,
            lr: adam.effective_lr(epoch),
            train_loss: loss_sum / steps as f64,
            val_mae,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Per-relation MAE (years) on pairs sampled from the validation fold.
fn validation_relation_mae(
    model: &mut PairModel32,
    val: &[Subject],
    cfg: &TrainConfig,
    epoch: usize,
    max_age: f64,
) -> Result<Vec<f64>> {
    if val.len() < 2 || cfg.val_pairs == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2 * epoch as u64 + 1));
    let pairs = sample_pair_batch(val, cfg.val_pairs, max_age, false, &mut rng)?;
    let k = model.head.relation_subset.len();
    let mut abs_err = vec![0.0f64; k];
    for chunk in pairs.chunks(cfg.batch_size.max(1)) {
        let xs: Vec<&ImageData> = chunk.iter().map(|&(x, _)| &val[x].image).collect();
        let ys: Vec<&ImageData> = chunk.iter().map(|&(_, y)| &val[y].image).collect();
        let targets = targets_for(model, val, chunk, max_age)?;
        let mut g = Graph::with_threads(cfg.threads);
        let preds = model.forward_pair_batch(&mut g, &xs, &ys, false)?;
        for (slot, &t) in preds.per_relation.iter().enumerate() {
            for (i, &p) in g.value(t).iter().enumerate() {
                abs_err[slot] += (p as f64 - targets[slot][i] as f64).abs();
            }
        }
    }
    Ok(abs_err
        .into_iter()
        .map(|s| s / pairs.len() as f64)
        .collect())
}
