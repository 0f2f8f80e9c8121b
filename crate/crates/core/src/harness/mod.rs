//! Training, cross-validation and result statistics.

mod cv;
mod stats;
mod sweep;
pub mod table;
mod train;

pub use cv::{confusion_csv, mean_std, run_cv, CvReport, FoldResult};
pub use stats::{
    summarize_table, wilcoxon_signed_rank, Column, ColumnSummary, Ratio, Wilcoxon, MAX_EXACT_N, REPORT_TOLERANCE,
    TIE_TOLERANCE,
};
pub use sweep::{run_sweep, sweep_csv, SweepReport};
pub use train::{argmax, evaluate, train, Evaluation, TrainConfig};
