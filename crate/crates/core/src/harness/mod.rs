//! Grid search over tunable settings and the JSON results report.

mod grid;
mod report;

pub use grid::{
    run_grid, GridPoint, GridResults, GridSpec, GridWinner, PointOutcome, PointResult, ValidationRun,
};
pub use report::{build_report, collect_results, emit_report, NetworkResult, ReportEntry, ReportRun};
