//! Evaluation report: per-strategy metrics aggregated over folds, paired
//! t-tests against the best strategy, uncertainty summaries, per-cohort MAE
//! tables, per-subject estimate rows and training curves — emitted as JSON
//! plus plot-ready CSV tables.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Subject;
use crate::error::{Error, Result};
use crate::experiments::eval::{EvalConfig, EvalMode, FoldEvaluation};
use crate::experiments::metrics::{
    mean, paired_t_test, pearson, population_std, significance_label,
};
use crate::experiments::train::EpochLog;
use crate::relations::StrategyId;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_subjects: usize,
    pub mae: f64,
    pub cs_percent: f64,
    pub pearson: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyId,
    pub mode: EvalMode,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub cs_mean: f64,
    pub cs_std: f64,
    pub pearson_mean: Option<f64>,
    pub pearson_std: Option<f64>,
    pub per_fold: Vec<FoldMetrics>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubjectEstimateRow {
    pub subject_id: String,
    pub tau: f64,
    pub cohort: String,
    pub fold: usize,
    pub strategy: StrategyId,
    pub estimate: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UncertaintyRow {
    pub subject_id: String,
    pub tau: f64,
    pub fold: usize,
    pub mode: EvalMode,
    pub uncertainty: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeUncertainty {
    pub mode: EvalMode,
    pub mean_uncertainty: f64,
    /// Pearson correlation between per-subject uncertainty and target.
    pub pearson_vs_age: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyTTest {
    pub strategy: StrategyId,
    pub baseline: StrategyId,
    pub t: f64,
    pub p_two_sided: f64,
    pub significance: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CohortMaeRow {
    pub cohort: String,
    pub strategy: StrategyId,
    pub mae: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelationMaeRow {
    pub fold: usize,
    pub relation: String,
    pub mae: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainCurveRow {
    pub fold: usize,
    pub member: usize,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub relation: String,
    pub val_mae: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub alpha: f64,
    pub k_folds: usize,
    pub n_subjects: usize,
    pub references_per_fold: Vec<usize>,
    pub strategies: Vec<StrategySummary>,
    pub best_strategy: Option<StrategyId>,
    pub t_tests: Vec<StrategyTTest>,
    pub uncertainty: Vec<ModeUncertainty>,
    pub per_cohort_mae: Vec<CohortMaeRow>,
    pub relation_mae: Vec<RelationMaeRow>,
    #[serde(skip)]
    pub per_subject: Vec<SubjectEstimateRow>,
    #[serde(skip)]
    pub uncertainty_rows: Vec<UncertaintyRow>,
    #[serde(skip)]
    pub training_curves: Vec<TrainCurveRow>,
}

/// Accumulates fold evaluations into an [`EvalReport`].
pub struct ReportBuilder {
    cfg: EvalConfig,
    fold_metrics: BTreeMap<StrategyId, Vec<FoldMetrics>>,
    per_subject: Vec<SubjectEstimateRow>,
    uncertainty_rows: Vec<UncertaintyRow>,
    relation_mae: Vec<RelationMaeRow>,
    training_curves: Vec<TrainCurveRow>,
    references_per_fold: Vec<usize>,
    n_subjects: usize,
    folds_seen: usize,
}

/// Average duplicate appearances: subject index -> mean value.
fn mean_by_subject(entries: &[(usize, f64)]) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for &(idx, v) in entries {
        let e = acc.entry(idx).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(idx, (s, n))| (idx, s / n as f64))
        .collect()
}

impl ReportBuilder {
    pub fn new(cfg: &EvalConfig) -> Self {
        ReportBuilder {
            cfg: cfg.clone(),
            fold_metrics: BTreeMap::new(),
            per_subject: Vec::new(),
            uncertainty_rows: Vec::new(),
            relation_mae: Vec::new(),
            training_curves: Vec::new(),
            references_per_fold: Vec::new(),
            n_subjects: 0,
            folds_seen: 0,
        }
    }

    pub fn add_fold(&mut self, fold: usize, test: &[Subject], eval: &FoldEvaluation) -> Result<()> {
        self.folds_seen += 1;
        self.n_subjects += test.len();
        self.references_per_fold.push(eval.n_references);

        for (&sid, entries) in &eval.estimates {
            if !self.cfg.keeps(sid) {
                continue;
            }
            let per_subject = mean_by_subject(entries);
            let mut estimates = Vec::with_capacity(per_subject.len());
            let mut truths = Vec::with_capacity(per_subject.len());
            for (&idx, &est) in &per_subject {
                let s = &test[idx];
                estimates.push(est);
                truths.push(s.tau);
                self.per_subject.push(SubjectEstimateRow {
                    subject_id: s.id.clone(),
                    tau: s.tau,
                    cohort: s.cohort.clone(),
                    fold,
                    strategy: sid,
                    estimate: est,
                    abs_error: (est - s.tau).abs(),
                });
            }
            if estimates.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "strategy {sid} produced fewer than 2 subject estimates in fold {fold}"
                )));
            }
            let errors: Vec<f64> = estimates
                .iter()
                .zip(&truths)
                .map(|(e, t)| (e - t).abs())
                .collect();
            let mae = mean(&errors);
            let cs = errors.iter().filter(|&&e| e <= self.cfg.alpha).count() as f64
                / errors.len() as f64
                * 100.0;
            let r = pearson(&estimates, &truths).ok();
            self.fold_metrics.entry(sid).or_default().push(FoldMetrics {
                fold,
                n_subjects: estimates.len(),
                mae,
                cs_percent: cs,
                pearson: r,
            });
        }

        for (&mode, entries) in &eval.uncertainties {
            for (&idx, &u) in &mean_by_subject(entries) {
                let s = &test[idx];
                self.uncertainty_rows.push(UncertaintyRow {
                    subject_id: s.id.clone(),
                    tau: s.tau,
                    fold,
                    mode,
                    uncertainty: u,
                });
            }
        }

        for &(rel, mae) in &eval.relation_mae {
            self.relation_mae.push(RelationMaeRow {
                fold,
                relation: rel.label().into(),
                mae,
            });
        }
        Ok(())
    }

    pub fn add_curves(&mut self, fold: usize, member: usize, subset: &[String], logs: &[EpochLog]) {
        for log in logs {
            if log.val_mae.is_empty() {
                self.training_curves.push(TrainCurveRow {
                    fold,
                    member,
                    epoch: log.epoch,
                    lr: log.lr,
                    train_loss: log.train_loss,
                    relation: String::new(),
                    val_mae: f64::NAN,
                });
            }
            for (slot, &mae) in log.val_mae.iter().enumerate() {
                self.training_curves.push(TrainCurveRow {
                    fold,
                    member,
                    epoch: log.epoch,
                    lr: log.lr,
                    train_loss: log.train_loss,
                    relation: subset.get(slot).cloned().unwrap_or_default(),
                    val_mae: mae,
                });
            }
        }
    }

    pub fn finish(self, k_folds: usize) -> Result<EvalReport> {
        let mut strategies = Vec::new();
        for (sid, per_fold) in &self.fold_metrics {
            let maes: Vec<f64> = per_fold.iter().map(|f| f.mae).collect();
            let css: Vec<f64> = per_fold.iter().map(|f| f.cs_percent).collect();
            let pearsons: Vec<f64> = per_fold.iter().filter_map(|f| f.pearson).collect();
            strategies.push(StrategySummary {
                strategy: *sid,
                mode: sid.mode_as_eval(),
                mae_mean: mean(&maes),
                mae_std: population_std(&maes),
                cs_mean: mean(&css),
                cs_std: population_std(&css),
                pearson_mean: (!pearsons.is_empty()).then(|| mean(&pearsons)),
                pearson_std: (!pearsons.is_empty()).then(|| population_std(&pearsons)),
                per_fold: per_fold.clone(),
            });
        }

        let best_strategy = strategies
            .iter()
            .min_by(|a, b| a.mae_mean.total_cmp(&b.mae_mean))
            .map(|s| s.strategy);

        // Pooled per-subject absolute errors, for paired tests vs. the best.
        let mut pooled: HashMap<StrategyId, HashMap<&str, f64>> = HashMap::new();
        for row in &self.per_subject {
            pooled
                .entry(row.strategy)
                .or_default()
                .insert(row.subject_id.as_str(), row.abs_error);
        }
        let mut t_tests = Vec::new();
        if let Some(base) = best_strategy {
            let base_errors = &pooled[&base];
            for s in &strategies {
                if s.strategy == base {
                    continue;
                }
                let errs = &pooled[&s.strategy];
                let mut ids: Vec<&str> = errs
                    .keys()
                    .filter(|id| base_errors.contains_key(*id))
                    .copied()
                    .collect();
                ids.sort_unstable();
                if ids.len() < 2 {
                    continue;
                }
                let a: Vec<f64> = ids.iter().map(|id| errs[id]).collect();
                let b: Vec<f64> = ids.iter().map(|id| base_errors[id]).collect();
                let tt = paired_t_test(&a, &b)?;
                t_tests.push(StrategyTTest {
                    strategy: s.strategy,
                    baseline: base,
                    t: tt.t,
                    p_two_sided: tt.p_two_sided,
                    significance: significance_label(tt.p_two_sided).to_string(),
                });
            }
        }

        let mut uncertainty = Vec::new();
        for mode in EvalMode::ALL {
            let rows: Vec<&UncertaintyRow> = self
                .uncertainty_rows
                .iter()
                .filter(|r| r.mode == mode)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let us: Vec<f64> = rows.iter().map(|r| r.uncertainty).collect();
            let taus: Vec<f64> = rows.iter().map(|r| r.tau).collect();
            uncertainty.push(ModeUncertainty {
                mode,
                mean_uncertainty: mean(&us),
                pearson_vs_age: pearson(&us, &taus).ok(),
            });
        }

        // Pooled cohort MAE per strategy.
        let mut cohort_acc: BTreeMap<(String, StrategyId), (f64, usize)> = BTreeMap::new();
        for row in &self.per_subject {
            let e = cohort_acc
                .entry((row.cohort.clone(), row.strategy))
                .or_insert((0.0, 0));
            e.0 += row.abs_error;
            e.1 += 1;
        }
        let per_cohort_mae = cohort_acc
            .into_iter()
            .map(|((cohort, strategy), (sum, n))| CohortMaeRow {
                cohort,
                strategy,
                mae: sum / n as f64,
                n,
            })
            .collect();

        Ok(EvalReport {
            alpha: self.cfg.alpha,
            k_folds,
            n_subjects: self.n_subjects,
            references_per_fold: self.references_per_fold,
            strategies,
            best_strategy,
            t_tests,
            uncertainty,
            per_cohort_mae,
            relation_mae: self.relation_mae,
            per_subject: self.per_subject,
            uncertainty_rows: self.uncertainty_rows,
            training_curves: self.training_curves,
        })
    }
}

impl StrategyId {
    fn mode_as_eval(self) -> EvalMode {
        match self.mode() {
            crate::relations::StrategyMode::Paired => EvalMode::Paired,
            crate::relations::StrategyMode::Reference => EvalMode::Reference,
            crate::relations::StrategyMode::SelfPair => EvalMode::SelfPair,
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

impl EvalReport {
    /// Write `report.json` plus the CSV tables under `dir/tables/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("tables"))?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
        std::fs::write(dir.join("report.json"), json)?;

        let t = |name: &str| dir.join("tables").join(name);
        #[derive(Serialize)]
        struct SummaryRow<'a> {
            strategy: StrategyId,
            mode: &'a EvalMode,
            mae_mean: f64,
            mae_std: f64,
            cs_mean: f64,
            cs_std: f64,
            pearson_mean: Option<f64>,
            pearson_std: Option<f64>,
        }
        let summary: Vec<SummaryRow> = self
            .strategies
            .iter()
            .map(|s| SummaryRow {
                strategy: s.strategy,
                mode: &s.mode,
                mae_mean: s.mae_mean,
                mae_std: s.mae_std,
                cs_mean: s.cs_mean,
                cs_std: s.cs_std,
                pearson_mean: s.pearson_mean,
                pearson_std: s.pearson_std,
            })
            .collect();
        write_csv(&t("strategy_summary.csv"), &summary)?;

        #[derive(Serialize)]
        struct PerFoldRow {
            strategy: StrategyId,
            fold: usize,
            n_subjects: usize,
            mae: f64,
            cs_percent: f64,
            pearson: Option<f64>,
        }
        let mut per_fold = Vec::new();
        for s in &self.strategies {
            for f in &s.per_fold {
                per_fold.push(PerFoldRow {
                    strategy: s.strategy,
                    fold: f.fold,
                    n_subjects: f.n_subjects,
                    mae: f.mae,
                    cs_percent: f.cs_percent,
                    pearson: f.pearson,
                });
            }
        }
        write_csv(&t("per_fold_metrics.csv"), &per_fold)?;
        write_csv(&t("per_subject_estimates.csv"), &self.per_subject)?;
        write_csv(&t("uncertainty_vs_age.csv"), &self.uncertainty_rows)?;
        write_csv(&t("training_curves.csv"), &self.training_curves)?;
        write_csv(&t("per_cohort_mae.csv"), &self.per_cohort_mae)?;
        write_csv(&t("t_tests.csv"), &self.t_tests)?;
        write_csv(&t("relation_mae.csv"), &self.relation_mae)?;
        Ok(())
    }

    /// Load a written report (JSON summary plus the per-subject table, which
    /// model comparison needs).
    pub fn load(dir: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(dir.join("report.json"))?;
        let mut report: EvalReport = serde_json::from_str(&json)
            .map_err(|e| Error::Format(format!("{}: {e}", dir.join("report.json").display())))?;
        let per_subject_path = dir.join("tables").join("per_subject_estimates.csv");
        if per_subject_path.exists() {
            let mut r = csv::Reader::from_path(&per_subject_path)?;
            for rec in r.deserialize() {
                report.per_subject.push(rec?);
            }
        }
        Ok(report)
    }
}
