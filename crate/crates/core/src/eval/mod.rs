//! Nested cross-validation, ensembling, ROC analysis, bootstrap intervals and
//! report files.

mod bootstrap;
mod pipeline;
mod predictions;
mod report;
mod roc;
mod splits;
mod table;

pub use bootstrap::{bootstrap_ci, bootstrap_indices, BootstrapSummary, DEFAULT_BOOTSTRAPS};
pub use pipeline::{
    evaluate_feature_step, evaluate_forest, forest_predictions, forest_predictions_with, rfe_per_outer_fold,
    sequential_feature_experiment, FeatureStep, ForestPipeline, REPETITIONS, SEQUENTIAL_STEPS,
};
pub use predictions::{
    ensemble, load_predictions, read_predictions_csv, save_predictions, write_predictions_csv, EnsembledPrediction,
    PredictionRow,
};
pub use report::{
    evaluate_predictions, evaluate_values, write_boxplot_csv, write_report_files, write_report_json, write_roc_csv,
    EvaluationReport, BOOTSTRAP_UNIT,
};
pub use roc::{auroc, roc_auroc, RocCurve, RocPoint};
pub use splits::{assert_disjoint, make_nested_splits, FoldAssignment, SplitPlan, INNER_FOLDS, OUTER_FOLDS};
pub use table::FeatureTable;
