//! Full-batch optimization: Adam, the first-layer L2 term, the plateau
//! schedule, best-epoch selection and multi-run statistics.

mod metrics;
mod optim;
mod run;
mod schedule;

pub use metrics::{aggregate, argmax, evaluate_accuracy, mean_sem, AggregateReport, RunSummary};
pub use optim::{OptimizerState, ADAM_EPS, BETA1, BETA2};
pub use run::{
    build_architecture, evaluate, l2_penalty, task_loss, train_prepared, train_run, train_runs,
    Checkpoint, EpochRecord, Evaluation, PreparedData, RunMetadata, RunOutcome, RunReport,
};
pub use schedule::PlateauSchedule;
