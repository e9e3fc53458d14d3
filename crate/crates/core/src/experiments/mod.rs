//! Training, evaluation, metrics and the cross-validation protocol.

mod cv;
mod eval;
mod loss;
mod metrics;
mod report;
pub mod stats;
mod train;

pub use cv::{run_cv, train_model_set};
pub use eval::{
    evaluate_fold, select_references, EvalConfig, EvalMode, FoldEvaluation, ModelMember, ModelSet,
};
pub use loss::{relation_loss, LossConfig, LossMode};
pub use metrics::{
    compute_metrics, paired_t_test, pearson, population_std, rank_models, significance_label,
    uncertainty, Metrics, TTest,
};
pub use report::{
    CohortMaeRow, EvalReport, FoldMetrics, ModeUncertainty, RelationMaeRow, ReportBuilder,
    StrategySummary, StrategyTTest, SubjectEstimateRow, TrainCurveRow, UncertaintyRow,
};
pub use train::{mix_seed, train_model, EpochLog, TrainConfig};
