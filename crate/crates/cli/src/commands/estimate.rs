use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use relage_core::data::read_rows;
use relage_core::experiments::{compute_metrics, EvalMode};
use relage_core::relations::{
    binarize_relation, mc_estimate, read_predictions, recover_pair, recover_self,
    recover_with_reference, StrategyId,
};
use relage_core::{Error, Result};

/// Standalone recovery: run the estimation strategies over an externally
/// produced relation-prediction CSV, without touching a model.
#[derive(Args)]
pub struct EstimateArgs {
    /// Relation predictions (pair_id,x_id,y_id,r1_hat,r2_hat,r3_hat,r4_hat).
    #[arg(long)]
    pub predictions: PathBuf,
    /// Which pairing the predictions came from.
    #[arg(long)]
    pub mode: EvalMode,
    /// Dataset manifest supplying reference ages (required in reference
    /// mode) and ground truths for metrics.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory for estimates.csv (and metrics.csv when truths are
    /// available).
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5.0)]
    pub mc_threshold: f64,
    /// Candidate grid upper bound for the maximum-consistency rule.
    #[arg(long, default_value_t = 100.0)]
    pub max_age: f64,
}

#[derive(Serialize)]
struct EstimateRow {
    subject_id: String,
    strategy: StrategyId,
    estimate: f64,
    tau: Option<f64>,
    abs_error: Option<f64>,
}

#[derive(Serialize)]
struct MetricsRow {
    strategy: StrategyId,
    n: usize,
    mae: f64,
    cs_percent: f64,
    pearson: f64,
}

pub fn run(args: EstimateArgs) -> Result<()> {
    let rows = read_predictions(&args.predictions)?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no prediction rows",
            args.predictions.display()
        )));
    }
    let ages: BTreeMap<String, f64> = match &args.manifest {
        Some(path) => read_rows(path)?
            .into_iter()
            .map(|r| (r.id, r.tau_years))
            .collect(),
        None => BTreeMap::new(),
    };

    // (subject, strategy) -> accumulated estimates, averaged over appearances.
    let mut acc: BTreeMap<(String, StrategyId), (f64, usize)> = BTreeMap::new();
    let push = |acc: &mut BTreeMap<(String, StrategyId), (f64, usize)>,
                id: &str,
                sid: StrategyId,
                v: f64| {
        let e = acc.entry((id.to_string(), sid)).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    };

    match args.mode {
        EvalMode::Paired => {
            for row in &rows {
                let rec = recover_pair(&row.relations());
                for (sid, est) in [
                    (StrategyId::S1, rec.s1),
                    (StrategyId::S2, rec.s2),
                    (StrategyId::S3, rec.s3),
                ] {
                    push(&mut acc, &row.x_id, sid, est.0);
                    push(&mut acc, &row.y_id, sid, est.1);
                }
            }
        }
        EvalMode::Reference => {
            if args.manifest.is_none() {
                return Err(Error::InvalidArgument(
                    "reference mode needs --manifest to provide the reference ages".into(),
                ));
            }
            let mut by_x: BTreeMap<&str, Vec<&relage_core::relations::PredictionRow>> =
                BTreeMap::new();
            for row in &rows {
                by_x.entry(&row.x_id).or_default().push(row);
            }
            let grid_max = args.max_age.ceil() as u32;
            for (x_id, group) in by_x {
                let mut sums = [0.0f64; 5];
                let mut comparisons = Vec::with_capacity(group.len());
                for row in &group {
                    let tau_y = *ages.get(&row.y_id).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "reference '{}' not present in the manifest",
                            row.y_id
                        ))
                    })?;
                    let rec = recover_with_reference(&row.relations(), tau_y);
                    for (slot, v) in [rec.s5, rec.s6, rec.s7, rec.s8, rec.s9]
                        .into_iter()
                        .enumerate()
                    {
                        sums[slot] += v;
                    }
                    comparisons.push((tau_y, binarize_relation(row.r2_hat, args.mc_threshold)?));
                }
                let n = group.len() as f64;
                push(
                    &mut acc,
                    x_id,
                    StrategyId::S4,
                    mc_estimate(&comparisons, args.mc_threshold, grid_max)?,
                );
                for (slot, sid) in [
                    StrategyId::S5,
                    StrategyId::S6,
                    StrategyId::S7,
                    StrategyId::S8,
                    StrategyId::S9,
                ]
                .into_iter()
                .enumerate()
                {
                    push(&mut acc, x_id, sid, sums[slot] / n);
                }
            }
        }
        EvalMode::SelfPair => {
            for row in &rows {
                let rec = recover_self(&row.relations());
                for (sid, v) in [
                    (StrategyId::S10, rec.s10),
                    (StrategyId::S11, rec.s11),
                    (StrategyId::S12, rec.s12),
                    (StrategyId::S13, rec.s13),
                    (StrategyId::S14, rec.s14),
                    (StrategyId::S15, rec.s15),
                    (StrategyId::S16, rec.s16),
                ] {
                    push(&mut acc, &row.x_id, sid, v);
                }
            }
        }
    }

    std::fs::create_dir_all(&args.output)?;
    let mut estimate_rows = Vec::new();
    let mut by_strategy: BTreeMap<StrategyId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((id, sid), (sum, n)) in &acc {
        let estimate = sum / *n as f64;
        let tau = ages.get(id).copied();
        if let Some(t) = tau {
            let e = by_strategy.entry(*sid).or_default();
            e.0.push(estimate);
            e.1.push(t);
        }
        estimate_rows.push(EstimateRow {
            subject_id: id.clone(),
            strategy: *sid,
            estimate,
            tau,
            abs_error: tau.map(|t| (estimate - t).abs()),
        });
    }
    let est_path = args.output.join("estimates.csv");
    let mut w = csv::Writer::from_path(&est_path)?;
    for row in &estimate_rows {
        w.serialize(row)?;
    }
    w.flush()?;
    println!(
        "{} estimates -> {}",
        estimate_rows.len(),
        est_path.display()
    );

    let metrics: Vec<MetricsRow> = by_strategy
        .iter()
        .filter(|(_, (est, _))| est.len() >= 2)
        .map(|(sid, (est, truth))| {
            compute_metrics(est, truth, args.alpha).map(|m| MetricsRow {
                strategy: *sid,
                n: est.len(),
                mae: m.mae,
                cs_percent: m.cs_percent,
                pearson: m.pearson,
            })
        })
        .collect::<Result<_>>()?;
    if !metrics.is_empty() {
        let path = args.output.join("metrics.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for m in &metrics {
            w.serialize(m)?;
            println!(
                "{}: n {} MAE {:.3} CS({}) {:.1}% pearson {:.4}",
                m.strategy, m.n, m.mae, args.alpha, m.cs_percent, m.pearson
            );
        }
        w.flush()?;
        println!("metrics -> {}", path.display());
    }
    Ok(())
}
