use std::path::PathBuf;

use clap::Args;

use relage_core::experiments::{evaluate_fold, EvalMode, ModelMember, ModelSet, ReportBuilder};
use relage_core::model::{HeadConfig, PairModel};
use relage_core::numerics::read_checkpoint;
use relage_core::relations::StrategyId;
use relage_core::{Error, Result};

use crate::config::{output_dir, RunConfig};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Run configuration (TOML); must match the checkpoints' architecture.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory containing member{i}.ckpt files from `relage train`.
    #[arg(long)]
    pub checkpoints: PathBuf,
    /// Manifest of the generated dataset.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for report.json and tables/.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Fold the checkpoints held out.
    #[arg(long, default_value_t = 0)]
    pub holdout_fold: usize,
    /// Cumulative-score threshold, years.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Binarization threshold for the maximum-consistency rule, years.
    #[arg(long)]
    pub mc_threshold: Option<f64>,
    /// Restrict evaluation modes, comma-separated (paired,reference,self).
    #[arg(long, value_delimiter = ',')]
    pub mode: Vec<EvalMode>,
    /// Restrict reported strategies, comma-separated (e.g. "S8,S15").
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<StrategyId>,
    /// Clamp estimates into [0, max_age].
    #[arg(long)]
    pub clamp: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut cfg = cfg.resolve()?;
    if let Some(alpha) = args.alpha {
        cfg.evaluation.alpha = alpha;
    }
    if let Some(t) = args.mc_threshold {
        cfg.evaluation.mc_threshold = t;
    }
    if !args.mode.is_empty() {
        cfg.evaluation.modes = args.mode.clone();
    }
    if !args.strategies.is_empty() {
        cfg.evaluation.strategies = Some(args.strategies.clone());
    }
    cfg.evaluation.clamp_to_range = cfg.evaluation.clamp_to_range || args.clamp;
    cfg.evaluation.validate()?;

    let mut members = Vec::new();
    for (mi, subset) in cfg.loss.model_subsets().into_iter().enumerate() {
        let head = HeadConfig {
            relation_subset: subset.clone(),
            ..cfg.head.clone()
        };
        let path = args.checkpoints.join(format!("member{mi}.ckpt"));
        let ckpt = read_checkpoint(&path)?;
        if ckpt.config_hash != cfg.member_hash(&head) {
            return Err(Error::Config(format!(
                "{}: config hash mismatch — this checkpoint was trained with a \
                 different architecture or max_age",
                path.display()
            )));
        }
        let model = PairModel::from_parts(cfg.backbone.clone(), head, ckpt.store)?;
        members.push(ModelMember { subset, model });
    }
    let models = ModelSet::new(members)?;

    let (test, train) = super::split_holdout(&args.manifest, args.holdout_fold)?;
    let out = output_dir(args.output.clone(), &cfg, "evaluate")?;
    std::fs::create_dir_all(&out)?;

    let fold_eval = evaluate_fold(
        &models,
        &test,
        &train,
        &cfg.evaluation,
        cfg.generator.max_age,
    )?;
    let mut builder = ReportBuilder::new(&cfg.evaluation);
    builder.add_fold(args.holdout_fold, &test, &fold_eval)?;
    let report = builder.finish(1)?;
    report.write(&out)?;
    cfg.write_resolved(&out)?;

    println!(
        "evaluated fold {} ({} subjects, {} references)",
        args.holdout_fold,
        test.len(),
        fold_eval.n_references
    );
    println!(
        "{:<5} {:<10} {:>8} {:>9} {:>9}",
        "strat", "mode", "MAE", "CS(a)", "Pearson"
    );
    for s in &report.strategies {
        println!(
            "{:<5} {:<10} {:>8.3} {:>8.1}% {:>9}",
            s.strategy.to_string(),
            s.mode.to_string(),
            s.mae_mean,
            s.cs_mean,
            s.pearson_mean
                .map_or("n/a".to_string(), |p| format!("{p:.4}")),
        );
    }
    println!("report -> {}", out.join("report.json").display());
    Ok(())
}
