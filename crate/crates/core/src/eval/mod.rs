//! Success, fit and smoothness metrics over policy rollouts, and the report
//! tables built from them.

mod evaluate;
mod metrics;
mod report;

pub use evaluate::{evaluate, EpisodeResult, EvalConfig, PolicyEvaluation, SHORT_ALIGNMENT};
pub use metrics::{
    average_success, r_squared, r_squared_axis, sparc, GazeAxis, Sparc, SparcConfig, SPARC_MIN_LEN,
};
pub use report::{
    write_plot_data, Column, MetricSet, MetricsReport, MetricsRow, RowGroup, CSV_HEADER,
};
