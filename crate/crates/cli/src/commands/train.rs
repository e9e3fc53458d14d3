use std::path::{Path, PathBuf};

use clap::Args;

use relage_core::data::Subject;
use relage_core::experiments::{
    mix_seed, run_cv, train_model, EpochLog, TrainConfig, TrainCurveRow,
};
use relage_core::model::{HeadConfig, PairModel, PairModel32};
use relage_core::numerics::{read_checkpoint, write_checkpoint, AdamState};
use relage_core::{Error, Result};

use crate::config::{output_dir, RunConfig};

#[derive(Args)]
pub struct TrainArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Manifest of the generated dataset.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for checkpoints and training curves.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Fold to hold out (training uses the remaining folds).
    #[arg(long, default_value_t = 0)]
    pub holdout_fold: usize,
    /// Run the full cross-validation protocol instead of a single split;
    /// writes the aggregated evaluation report.
    #[arg(long)]
    pub cv: bool,
    /// Folds trained concurrently in --cv mode.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Resume single-split training from existing checkpoints.
    #[arg(long)]
    pub resume: bool,
    /// Named schedule preset ("paper-schedule" = 80 epochs, halving at 35).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

fn apply_overrides(mut cfg: RunConfig, args: &TrainArgs) -> Result<RunConfig> {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    match args.preset.as_deref() {
        None => {}
        Some("paper-schedule") => cfg.training = cfg.training.paper_schedule(),
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (available: paper-schedule)"
            )));
        }
    }
    if let Some(epochs) = args.epochs {
        cfg.training.epochs = epochs;
    }
    if let Some(threads) = args.threads {
        cfg.training.threads = threads.max(1);
    }
    cfg.resolve()
}

fn check_geometry(cfg: &RunConfig, subjects: &[Subject]) -> Result<()> {
    let mut expected = vec![cfg.backbone.in_channels];
    expected.extend_from_slice(&cfg.backbone.input_spatial);
    if let Some(s) = subjects.first() {
        if s.image.shape != expected {
            return Err(Error::Config(format!(
                "manifest images have shape {:?}, model expects {expected:?}",
                s.image.shape
            )));
        }
    }
    Ok(())
}

fn write_curves(path: &Path, rows: &[TrainCurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<()> {
    let cfg = apply_overrides(RunConfig::load(&args.config)?, &args)?;
    let out = output_dir(args.output.clone(), &cfg, "train")?;
    std::fs::create_dir_all(&out)?;
    cfg.write_resolved(&out)?;

    if args.cv {
        return run_full_cv(&cfg, &args, &out);
    }

    let (test, train) = super::split_holdout(&args.manifest, args.holdout_fold)?;
    check_geometry(&cfg, &train)?;
    println!(
        "training on {} subjects, holding out fold {} ({} subjects)",
        train.len(),
        args.holdout_fold,
        test.len()
    );

    let fold_seed = mix_seed(cfg.seed, 1000 + args.holdout_fold as u64);
    let max_age = cfg.generator.max_age;
    for (mi, subset) in cfg.loss.model_subsets().into_iter().enumerate() {
        let head = HeadConfig {
            relation_subset: subset.clone(),
            ..cfg.head.clone()
        };
        let member_hash = cfg.member_hash(&head);
        let member_cfg = TrainConfig {
            seed: mix_seed(fold_seed, 200 + mi as u64),
            ..cfg.training.clone()
        };
        let ckpt_path = out.join(format!("member{mi}.ckpt"));

        let (mut model, mut adam, start_epoch) = if args.resume && ckpt_path.exists() {
            let ckpt = read_checkpoint(&ckpt_path)?;
            if ckpt.config_hash != member_hash {
                return Err(Error::Config(format!(
                    "checkpoint {} was trained with a different architecture",
                    ckpt_path.display()
                )));
            }
            let optimizer = ckpt.optimizer.ok_or_else(|| {
                Error::Format(format!(
                    "{}: no optimizer state to resume",
                    ckpt_path.display()
                ))
            })?;
            let model = PairModel::from_parts(cfg.backbone.clone(), head.clone(), ckpt.store)?;
            println!(
                "member {mi}: resuming after epoch {}",
                ckpt.epochs_completed
            );
            (model, optimizer, ckpt.epochs_completed as usize)
        } else {
            let model = PairModel32::build(
                cfg.backbone.clone(),
                head.clone(),
                mix_seed(fold_seed, 100 + mi as u64),
            )?;
            let adam = AdamState::new(&model.store, member_cfg.base_lr, member_cfg.half_period);
            (model, adam, 0)
        };

        std::fs::write(
            out.join(format!("model_summary_member{mi}.txt")),
            model.summary(),
        )?;
        if mi == 0 {
            println!("{}", model.summary());
        }

        let labels: Vec<String> = subset.iter().map(|r| r.label().to_string()).collect();
        let mut curves: Vec<TrainCurveRow> = Vec::new();
        for epoch in start_epoch..member_cfg.epochs {
            let upto = TrainConfig {
                epochs: epoch + 1,
                ..member_cfg.clone()
            };
            let logs = train_model(
                &mut model,
                &mut adam,
                &train,
                &test,
                &upto,
                epoch,
                max_age,
                |log: &EpochLog| {
                    println!(
                        "member {mi} epoch {:>3}/{} lr {:.2e} loss {:.3} val_mae {:?}",
                        log.epoch + 1,
                        member_cfg.epochs,
                        log.lr,
                        log.train_loss,
                        log.val_mae
                            .iter()
                            .map(|m| (m * 100.0).round() / 100.0)
                            .collect::<Vec<_>>()
                    );
                },
            )?;
            for log in &logs {
                for (slot, &mae) in log.val_mae.iter().enumerate() {
                    curves.push(TrainCurveRow {
                        fold: args.holdout_fold,
                        member: mi,
                        epoch: log.epoch,
                        lr: log.lr,
                        train_loss: log.train_loss,
                        relation: labels[slot].clone(),
                        val_mae: mae,
                    });
                }
            }
            write_checkpoint(
                &ckpt_path,
                &member_hash,
                (epoch + 1) as u32,
                &model.store,
                Some(&adam),
            )?;
            write_curves(&out.join(format!("training_curve_member{mi}.csv")), &curves)?;
        }
        println!("member {mi}: checkpoint at {}", ckpt_path.display());
    }
    Ok(())
}

fn run_full_cv(cfg: &RunConfig, args: &TrainArgs, out: &Path) -> Result<()> {
    let mut subjects = relage_core::data::load_dataset(&args.manifest)?;
    check_geometry(cfg, &subjects)?;
    println!(
        "running {}-fold cross-validation on {} subjects ({} workers)",
        cfg.cv.k,
        subjects.len(),
        args.workers.max(1)
    );
    let progress = std::sync::Mutex::new(());
    let report = run_cv(
        &mut subjects,
        &cfg.backbone,
        &cfg.head,
        &cfg.loss,
        &cfg.training,
        &cfg.evaluation,
        cfg.cv.k,
        cfg.generator.max_age,
        cfg.seed,
        args.workers.max(1),
        |fold, member, log| {
            let _guard = progress.lock();
            println!(
                "fold {fold} member {member} epoch {:>3} loss {:.3}",
                log.epoch + 1,
                log.train_loss
            );
        },
    )?;
    report.write(out)?;
    println!(
        "cross-validation report -> {}",
        out.join("report.json").display()
    );
    if let Some(best) = report.best_strategy {
        let s = report
            .strategies
            .iter()
            .find(|s| s.strategy == best)
            .unwrap();
        println!(
            "best strategy {best}: MAE {:.2} ± {:.2}, CS({}) {:.1}%",
            s.mae_mean, s.mae_std, report.alpha, s.cs_mean
        );
    }
    Ok(())
}
