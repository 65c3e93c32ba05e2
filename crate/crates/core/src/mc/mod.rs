//! Monte Carlo harness: configuration, the replication engine, aggregate
//! statistics and the files a run leaves behind.

mod boundary;
pub mod config;
mod engine;
mod output;
mod stats;

pub use boundary::{boundary_demo, BoundaryDesign, BoundarySummary};
pub use config::{
    apply_override, Check, CheckKind, CrossConfig, Diagnostics, ExperimentConfig, GridPoint, LoadingConfig,
    LoadingKindConfig, NoiseConfig, TargetKind, TargetSpec, TemporalConfig, VarianceMode, SCHEMA_VERSION,
};
pub use engine::{lno_statistic, run_experiment, run_replication, GridProgress, ReplicationRecord, RunOutput};
pub use output::{
    ci_hits, coverage_stats, error_norms, grid_slope, plot_data, prepare_output_dir, series, studentized_draws,
    summarize, write_outputs, write_records_csv, CheckResult, GridSummary, RateSummary, Summary, TargetSummary,
    RECORD_COLUMNS,
};
pub use stats::{
    coverage_from_hits, ks_critical_1pct, ks_statistic, median, normality_check, ols, rate_regression,
    CoverageStats, NormalityStats, RateFit, MIN_COVERAGE_RECORDS, MIN_GRID_POINTS, MIN_NORMALITY_DRAWS,
};
