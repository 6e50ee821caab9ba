//! Leave-one-subject-out evaluation: fold plans, metrics, the experiment
//! driver, sweeps and report files.

mod experiment;
mod metrics;
mod protocol;
mod report;
mod sweep;

pub use experiment::{
    decode_prepared, encode_segments, fold_from_table, prepare_folds, run_experiment, DecoderKind, ExperimentConfig, ExperimentOutput, FeatureSource, FoldFeatures,
    Normalization, PreparedFolds,
};
pub use metrics::{accuracy, f1_score, macro_f1, nmi};
pub use protocol::{fold_indices, leakage_guard, loocv_folds, loocv_folds_for, FoldPlan};
pub use report::{
    paper_table, read_predictions, write_predictions, DimensionSummary, EvalReport, PredictionRow, ReportMeta, ReportRow, Stat,
    REPORT_CSV_HEADER,
};
pub use sweep::{
    resample_corpus, sweep, write_timing_csv, SweepAxis, SweepGrid, SweepOutput, SweepPoint, TimingRow, ETA_GRID, KAPPA_GRID,
    TIMING_CSV_HEADER,
};
