//! The cross-validation driver: k-fold split, per-fold training of the
//! model set (one, two or four networks depending on the loss mode), and
//! evaluation of every held-out fold in all requested modes.

use crate::data::{assign_folds, Subject};
use crate::error::Result;
use crate::experiments::eval::{evaluate_fold, EvalConfig, ModelMember, ModelSet};
use crate::experiments::loss::LossConfig;
use crate::experiments::report::{EvalReport, ReportBuilder};
use crate::experiments::train::{mix_seed, train_model, EpochLog, TrainConfig};
use crate::model::{BackboneConfig, HeadConfig, PairModel};
use crate::numerics::AdamState;

/// Build and train the model set for one training split. `seed` separates
/// member initialization and batch sampling between folds.
#[allow(clippy::too_many_arguments)]
pub fn train_model_set(
    backbone: &BackboneConfig,
    head: &HeadConfig,
    loss: &LossConfig,
    train_cfg: &TrainConfig,
    train: &[Subject],
    val: &[Subject],
    max_age: f64,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &EpochLog),
) -> Result<(ModelSet, Vec<Vec<EpochLog>>)> {
    let mut members = Vec::new();
    let mut logs = Vec::new();
    for (mi, subset) in loss.model_subsets().into_iter().enumerate() {
        let head_cfg = HeadConfig {
            relation_subset: subset.clone(),
            ..head.clone()
        };
        let mut model =
            PairModel::build(backbone.clone(), head_cfg, mix_seed(seed, 100 + mi as u64))?;
        let member_cfg = TrainConfig {
            seed: mix_seed(seed, 200 + mi as u64),
            ..train_cfg.clone()
        };
        let mut adam = AdamState::new(&model.store, member_cfg.base_lr, member_cfg.half_period);
        let member_logs = train_model(
            &mut model,
            &mut adam,
            train,
            val,
            &member_cfg,
            0,
            max_age,
            |log| on_epoch(mi, log),
        )?;
        logs.push(member_logs);
        members.push(ModelMember { subset, model });
    }
    Ok((ModelSet::new(members)?, logs))
}

struct FoldOutcome {
    fold: usize,
    test: Vec<Subject>,
    eval: crate::experiments::eval::FoldEvaluation,
    logs: Vec<Vec<EpochLog>>,
    subsets: Vec<Vec<String>>,
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    subjects: &[Subject],
    fold: usize,
    backbone: &BackboneConfig,
    head: &HeadConfig,
    loss: &LossConfig,
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
    max_age: f64,
    seed: u64,
    on_epoch: &(impl Fn(usize, usize, &EpochLog) + Sync),
) -> Result<FoldOutcome> {
    let test: Vec<Subject> = subjects
        .iter()
        .filter(|s| s.fold == fold)
        .cloned()
        .collect();
    let train: Vec<Subject> = subjects
        .iter()
        .filter(|s| s.fold != fold)
        .cloned()
        .collect();
    let (models, logs) = train_model_set(
        backbone,
        head,
        loss,
        train_cfg,
        &train,
        &test,
        max_age,
        mix_seed(seed, 1000 + fold as u64),
        |member, log| on_epoch(fold, member, log),
    )?;
    let subsets = models
        .members
        .iter()
        .map(|m| m.subset.iter().map(|r| r.label().to_string()).collect())
        .collect();
    let eval = evaluate_fold(&models, &test, &train, eval_cfg, max_age)?;
    Ok(FoldOutcome {
        fold,
        test,
        eval,
        logs,
        subsets,
    })
}

/// Run the full k-fold protocol: every subject is held out exactly once.
/// `on_epoch(fold, member, log)` observes training progress. Folds are
/// independent; `workers > 1` trains that many folds concurrently, with
/// results merged in fold order so the report is identical either way.
#[allow(clippy::too_many_arguments)]
pub fn run_cv(
    subjects: &mut [Subject],
    backbone: &BackboneConfig,
    head: &HeadConfig,
    loss: &LossConfig,
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
    k: usize,
    max_age: f64,
    seed: u64,
    workers: usize,
    on_epoch: impl Fn(usize, usize, &EpochLog) + Sync,
) -> Result<EvalReport> {
    assign_folds(subjects, k, seed)?;
    let mut outcomes: Vec<FoldOutcome> = Vec::with_capacity(k);
    if workers.max(1) == 1 {
        for fold in 0..k {
            outcomes.push(run_fold(
                subjects, fold, backbone, head, loss, train_cfg, eval_cfg, max_age, seed, &on_epoch,
            )?);
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = std::sync::Mutex::new(Vec::with_capacity(k));
        std::thread::scope(|scope| {
            for _ in 0..workers.min(k) {
                scope.spawn(|| loop {
                    let fold = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if fold >= k {
                        break;
                    }
                    let outcome = run_fold(
                        subjects, fold, backbone, head, loss, train_cfg, eval_cfg, max_age, seed,
                        &on_epoch,
                    );
                    results.lock().expect("fold worker panicked").push(outcome);
                });
            }
        });
        let collected = results.into_inner().expect("fold worker panicked");
        for outcome in collected {
            outcomes.push(outcome?);
        }
        outcomes.sort_by_key(|o| o.fold);
    }

    let mut builder = ReportBuilder::new(eval_cfg);
    for outcome in &outcomes {
        for (mi, member_logs) in outcome.logs.iter().enumerate() {
            builder.add_curves(outcome.fold, mi, &outcome.subsets[mi], member_logs);
        }
        builder.add_fold(outcome.fold, &outcome.test, &outcome.eval)?;
    }
    builder.finish(k)
}
