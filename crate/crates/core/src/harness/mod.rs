//! Mission runner, metrics, batches, reports and plots.

pub mod batch;
pub mod metrics;
pub mod mission;
pub mod plot;
pub mod report;

pub use batch::{run_batch, summarize, win_counts, BatchResult, ModeSummary, ThresholdSummary, WinCount};
pub use metrics::{compute_metrics, path_length, MetricsReport, ThresholdMetrics};
pub use mission::{
    reachable_voxels, run_mission, CycleSummary, EndReason, GridStats, MissionError, MissionLog,
    MissionOptions, MissionOutcome, PoseSample, ReachEvent,
};
pub use plot::{emit_plot, render_svg};
pub use report::{
    read_reports_json, write_reports_csv, write_reports_json, write_summary_csv, write_wins_csv,
    ReportError,
};
