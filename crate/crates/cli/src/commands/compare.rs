use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use relage_core::experiments::{paired_t_test, rank_models, significance_label, EvalReport};
use relage_core::relations::StrategyId;
use relage_core::{Error, Result};

/// Compare evaluation reports over the same held-out subjects: pooled MAE
/// per strategy, paired t-tests against the first (baseline) report, and an
/// average-rank table over cohorts.
#[derive(Args)]
pub struct CompareArgs {
    /// Report directories produced by `relage evaluate` / `train --cv`;
    /// the first is the baseline.
    #[arg(required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    /// Strategy used for the per-cohort rank table (default: the baseline's
    /// best strategy).
    #[arg(long)]
    pub strategy: Option<StrategyId>,
    /// Write comparison.csv and ranks.csv here (otherwise stdout only).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct ComparisonRow {
    strategy: StrategyId,
    report: String,
    n: usize,
    mae: f64,
    t_vs_baseline: Option<f64>,
    p_two_sided: Option<f64>,
    significance: String,
}

#[derive(Serialize)]
struct RankRow {
    report: String,
    strategy: StrategyId,
    average_rank: f64,
}

struct Loaded {
    name: String,
    report: EvalReport,
    /// strategy -> subject -> absolute error
    errors: BTreeMap<StrategyId, BTreeMap<String, f64>>,
}

pub fn run(args: CompareArgs) -> Result<()> {
    if args.reports.len() < 2 {
        return Err(Error::InvalidArgument(
            "compare needs at least two reports (a report may be listed twice)".into(),
        ));
    }
    let mut loaded = Vec::new();
    for (i, dir) in args.reports.iter().enumerate() {
        let report = EvalReport::load(dir)?;
        if report.per_subject.is_empty() {
            return Err(Error::Format(format!(
                "{}: report has no per-subject table",
                dir.display()
            )));
        }
        let mut errors: BTreeMap<StrategyId, BTreeMap<String, f64>> = BTreeMap::new();
        for row in &report.per_subject {
            errors
                .entry(row.strategy)
                .or_default()
                .insert(row.subject_id.clone(), row.abs_error);
        }
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("report{i}"));
        loaded.push(Loaded {
            name,
            report,
            errors,
        });
    }

    // All reports must cover the same held-out subjects.
    let subject_set = |l: &Loaded| -> BTreeSet<String> {
        l.report
            .per_subject
            .iter()
            .map(|r| r.subject_id.clone())
            .collect()
    };
    let baseline_subjects = subject_set(&loaded[0]);
    for l in &loaded[1..] {
        if subject_set(l) != baseline_subjects {
            return Err(Error::InvalidArgument(format!(
                "report '{}' covers a different held-out subject set than '{}'",
                l.name, loaded[0].name
            )));
        }
    }

    // Strategies present in every report.
    let mut common: BTreeSet<StrategyId> = loaded[0].errors.keys().copied().collect();
    for l in &loaded[1..] {
        common.retain(|s| l.errors.contains_key(s));
    }
    if common.is_empty() {
        return Err(Error::InvalidArgument("reports share no strategies".into()));
    }

    let mut comparison = Vec::new();
    for &sid in &common {
        let base = &loaded[0].errors[&sid];
        let ids: Vec<&String> = base.keys().collect();
        for (i, l) in loaded.iter().enumerate() {
            let errs = &l.errors[&sid];
            let aligned: Vec<f64> = ids.iter().map(|id| errs[*id]).collect();
            let mae = aligned.iter().sum::<f64>() / aligned.len() as f64;
            let (t, p, stars) = if i == 0 {
                (None, None, String::new())
            } else {
                let base_aligned: Vec<f64> = ids.iter().map(|id| base[*id]).collect();
                let tt = paired_t_test(&aligned, &base_aligned)?;
                (
                    Some(tt.t),
                    Some(tt.p_two_sided),
                    significance_label(tt.p_two_sided).to_string(),
                )
            };
            comparison.push(ComparisonRow {
                strategy: sid,
                report: l.name.clone(),
                n: aligned.len(),
                mae,
                t_vs_baseline: t,
                p_two_sided: p,
                significance: stars,
            });
        }
    }

    // Rank table: per-cohort MAE of the chosen strategy, one row per report.
    let rank_strategy = match args.strategy {
        Some(s) => s,
        None => loaded[0].report.best_strategy.unwrap_or(StrategyId::S3),
    };
    if !common.contains(&rank_strategy) {
        return Err(Error::InvalidArgument(format!(
            "strategy {rank_strategy} is not present in every report"
        )));
    }
    let cohorts: BTreeSet<String> = loaded[0]
        .report
        .per_subject
        .iter()
        .map(|r| r.cohort.clone())
        .collect();
    let mut matrix: Vec<Vec<f64>> = Vec::new();
    for l in &loaded {
        let mut row = Vec::new();
        for cohort in &cohorts {
            let errs: Vec<f64> = l
                .report
                .per_subject
                .iter()
                .filter(|r| r.strategy == rank_strategy && &r.cohort == cohort)
                .map(|r| r.abs_error)
                .collect();
            if errs.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "report '{}' has no cohort '{cohort}' under {rank_strategy}",
                    l.name
                )));
            }
            row.push(errs.iter().sum::<f64>() / errs.len() as f64);
        }
        matrix.push(row);
    }
    let ranks = rank_models(&matrix)?;
    let rank_rows: Vec<RankRow> = loaded
        .iter()
        .zip(&ranks)
        .map(|(l, &r)| RankRow {
            report: l.name.clone(),
            strategy: rank_strategy,
            average_rank: r,
        })
        .collect();

    println!(
        "{:<6} {:<20} {:>6} {:>9} {:>9} {:>10}  sig",
        "strat", "report", "n", "MAE", "t", "p"
    );
    for row in &comparison {
        println!(
            "{:<6} {:<20} {:>6} {:>9.3} {:>9} {:>10}  {}",
            row.strategy.to_string(),
            row.report,
            row.n,
            row.mae,
            row.t_vs_baseline.map_or("-".into(), |t| format!("{t:.3}")),
            row.p_two_sided.map_or("-".into(), |p| format!("{p:.2e}")),
            row.significance
        );
    }
    println!(
        "\naverage rank over {} cohorts ({rank_strategy}):",
        cohorts.len()
    );
    for row in &rank_rows {
        println!("  {:<20} {:.2}", row.report, row.average_rank);
    }

    if let Some(out) = &args.output {
        std::fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_path(out.join("comparison.csv"))?;
        for row in &comparison {
            w.serialize(row)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(out.join("ranks.csv"))?;
        for row in &rank_rows {
            w.serialize(row)?;
        }
        w.flush()?;
        println!("tables -> {}", out.display());
    }
    Ok(())
}
