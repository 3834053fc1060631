//! Misclassification detection metrics, segmentation quality and
//! dataset-level aggregation.
//!
//! The positive class throughout is "misclassified": a good uncertainty map
//! ranks wrong pixels above correct ones.

mod auroc;
mod detection;
mod histogram;
mod quality;
mod report;
mod target;

pub use auroc::{auroc, class_pools, classwise_auroc, trapezoidal_auroc, RankPool};
pub use detection::{precision_recall, PRStats};
pub use histogram::{cumulative_histograms, CumulativeHistograms, HistogramAccumulator};
pub use quality::{
    accumulate_confusion, brier, ece, grid_index, miou, BrierAccumulator, ConfusionMatrix,
    EceAccumulator, MiouResult, DEFAULT_ECE_BINS,
};
pub use report::{
    aggregate, AggregateMode, EvalReport, ImageEvaluation, ReportBuilder, ReportTotals,
    AGGREGATED_METRICS, CSV_COLUMNS, REPORT_SCHEMA_VERSION,
};
pub use target::{
    argmax_labels, argmax_with_confidence, misclassification_target, DetectionTarget,
    PredictedLabels,
};
