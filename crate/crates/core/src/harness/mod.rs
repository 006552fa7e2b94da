//! Experiment runner: splitting, training with checkpoint selection on the
//! validation split, top-k evaluation and the accuracy/size trade-off report.

mod experiment;
mod features;
mod knn;
mod metrics;
mod report;
mod split;
mod train;

pub use experiment::{
    evaluate, fit, load_for, predictor_seed, run_experiment, run_on_dataset, ExperimentConfig,
    ExperimentOutput, ExperimentReport, PredictorDetails, PredictorReport, DETAILS_FILE,
    REPORT_FILE, TRADEOFF_FILE,
};
pub use features::{build_features, FeatureSet, SplitData};
pub use knn::knn_scores;
pub use metrics::{argmax, topk_accuracy, Metrics};
pub use report::{report_csv, report_table, tradeoff_csv, tradeoff_table, TradeoffRow};
pub use split::{assign_splits, split_dataset, SplitSpec};
pub use train::{predict, train_predictor, EpochRecord, TrainHistory};
