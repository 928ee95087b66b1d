//! Paired-only and JEIT training, evaluation and reporting.

mod config;
mod experiment;
mod optim;
mod report;

pub use config::{ModelShape, Regime, TrainConfig};
pub use experiment::{
    evaluate_all, evaluate_examples, headline, init_params, run_experiment, train, train_step, Evaluation,
    ExperimentResult, Headline, LogLine, RunReport, StepOutcome, TrainOutcome, CHECKPOINT_FILE, LOG_FILE, REPORT_FILE,
};
pub use optim::{global_norm, Sgd};
pub use report::{headline_table, median, Comparison, RegimeSummary};
