//! Experiment orchestration: parent training, child transplant trials, the
//! full transfer grid, and report generation.

mod curve;
mod grid;
mod report;
mod trainer;

pub use curve::{CurveRow, LearningCurve, CURVE_HEADER};
pub use grid::{plan_grid, run_grid, ExperimentGrid, GridSummary, PlannedTrial};
pub use report::{report, ReportPaths};
pub use trainer::{
    evaluate_policy, run_child, run_parent, train_loop, ChildSpec, EvalPoint, TrainLoopConfig,
    TrialPaths, EVAL_SEED_BASE,
};

use thiserror::Error;

use crate::agent::AgentError;
use crate::envs::EnvError;
use crate::nn::NnError;
use crate::replay::ReplayError;
use crate::surgery::{CheckpointError, SurgeryError, TransplantMode};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Surgery(#[from] SurgeryError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("bad grid config: {0}")]
    BadConfig(String),
    #[error("bad curve file: {0}")]
    BadCurveFile(String),
    #[error("missing parent checkpoint for {env} at {path}")]
    MissingParent { env: String, path: String },
    #[error("no completed trials found in {0}")]
    NothingToReport(String),
}

/// Trial identifier for a scratch-trained parent.
pub fn parent_trial_id(env: &str) -> String {
    format!("parent-{}--run0", env)
}

/// Trial identifier for a transplant child, following the
/// "child{k}-{frozen|finetuned}-{parent}--on-{child}--run{r}" grammar.
pub fn child_trial_id(
    k: usize,
    mode: TransplantMode,
    parent_env: &str,
    child_env: &str,
    run: u32,
) -> String {
    format!(
        "child{}-{}-{}--on-{}--run{}",
        k,
        mode.trial_str(),
        parent_env,
        child_env,
        run
    )
}
