//! Benchmark harness comparing a constant-rate baseline against the
//! range-test / restart / differential-rate pipeline.

mod config;
mod pipeline;
mod report;

pub use config::{BenchConfig, DatasetSpec, ModelSpec};
pub use pipeline::{
    build_model, find_lr, prepare_data, run_conventional, run_conventional_on, run_optimized, run_optimized_on, PreparedData,
    PHASE_DLR, PHASE_FIXED_HIGH, PHASE_FIXED_LOW, PHASE_LR_FIND, PHASE_SGDR,
};
pub use report::{
    confusion, read_confusion_csv, read_history_csv, read_lr_log_csv, read_phases_csv, render_text, speedup,
    speedup_ratio, write_confusion_csv, write_report, ConfusionMatrix, EpochRecord, LrLogRow, PhaseReport, RunReport,
    HISTORY_HEADER, LR_LOG_HEADER, PHASES_HEADER,
};
