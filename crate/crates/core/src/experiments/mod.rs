//! Metrics, statistics, monolithic baselines, cross-validation, and the
//! interoperability experiment runner.

pub mod baselines;
pub mod cv;
pub mod iio;
pub mod metrics;
pub mod results;
pub mod stats;

pub use baselines::{baseline_logreg, baseline_mlp, BaselineConfig, Imputation};
pub use cv::{compare_methods, cv_5x2, cv_5x2_folds, modn_fit_predict, CvComparison, CvScores, Method};
pub use iio::{predict_table, run_iio_experiment, run_iio_on, static_view, DatasetSource, ExperimentConfig};
pub use metrics::{macro_f1, overall_f1, PredictionSet};
pub use results::{Comparison, ExportFormat, ResultRow, ResultsTable, Scenario, CSV_HEADER};
pub use stats::{five_by_two_t_test, mean_ci, paired_t_test, t_test, MeanCi, TTest, TTestMode};
