//! Transfer-grid orchestration: planning the full trial set, parsing grid
//! config files, and running trials in parallel with resume-on-restart.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::trainer::{run_child, run_parent, ChildSpec, TrainLoopConfig, TrialPaths};
use super::{child_trial_id, parent_trial_id, HarnessError};
use crate::envs::ENV_NAMES;
use crate::surgery::TransplantMode;

/// Evaluation cadence used for every grid trial.
pub const GRID_EVAL_EVERY: u64 = 5_000;
/// Episodes per evaluation point in grid trials.
pub const GRID_EVAL_EPISODES: usize = 10;

/// The full experiment description. `Default` reproduces the reference grid:
/// 3 parents plus 3x3x2x2x3 = 108 children, 111 trials total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentGrid {
    pub envs: Vec<String>,
    pub k_values: Vec<usize>,
    pub modes: Vec<TransplantMode>,
    pub runs: u32,
    pub parent_steps: u64,
    pub child_steps: u64,
    pub base_seed: u64,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            envs: ENV_NAMES.iter().map(|s| s.to_string()).collect(),
            k_values: vec![2, 4],
            modes: vec![TransplantMode::Freeze, TransplantMode::Finetune],
            runs: 3,
            parent_steps: 50_000,
            child_steps: 50_000,
            base_seed: 17,
        }
    }
}

impl ExperimentGrid {
    /// Parses the key=value grid config format. Unknown keys are rejected;
    /// missing keys keep their defaults. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut grid = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::BadConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                HarnessError::BadConfig(format!("line {}: bad {} value {:?}", lineno + 1, what, value))
            };
            match key {
                "envs" => {
                    grid.envs = value
                        .split(',')
                        .map(|e| e.trim().to_string())
                        .filter(|e| !e.is_empty())
                        .collect();
                    for env in &grid.envs {
                        if !ENV_NAMES.contains(&env.as_str()) {
                            return Err(HarnessError::BadConfig(format!(
                                "line {}: unknown environment {:?}",
                                lineno + 1,
                                env
                            )));
                        }
                    }
                }
                "k_values" => {
                    grid.k_values = value
                        .split(',')
                        .map(|k| k.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad("k_values"))?;
                }
                "modes" => {
                    grid.modes = value
                        .split(',')
                        .map(|m| TransplantMode::from_str(m.trim()))
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad("modes"))?;
                }
                "runs" => grid.runs = value.parse().map_err(|_| bad("runs"))?,
                "parent_steps" => grid.parent_steps = value.parse().map_err(|_| bad("parent_steps"))?,
                "child_steps" => grid.child_steps = value.parse().map_err(|_| bad("child_steps"))?,
                "base_seed" => grid.base_seed = value.parse().map_err(|_| bad("base_seed"))?,
                other => {
                    return Err(HarnessError::BadConfig(format!(
                        "line {}: unknown key {:?}",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        if grid.envs.is_empty() || grid.k_values.is_empty() || grid.modes.is_empty() {
            return Err(HarnessError::BadConfig(
                "envs, k_values and modes must be non-empty".to_string(),
            ));
        }
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// One planned trial; parents always precede children in a plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannedTrial {
    Parent {
        env: String,
    },
    Child {
        parent_env: String,
        child_env: String,
        k: usize,
        mode: TransplantMode,
        run: u32,
    },
}

impl PlannedTrial {
    pub fn trial_id(&self) -> String {
        match self {
            PlannedTrial::Parent { env } => parent_trial_id(env),
            PlannedTrial::Child {
                parent_env,
                child_env,
                k,
                mode,
                run,
            } => child_trial_id(*k, *mode, parent_env, child_env, *run),
        }
    }
}

/// Expands a grid into its deterministic trial list: one parent per
/// environment, then children ordered by parent env, child env, k, mode, run.
pub fn plan_grid(grid: &ExperimentGrid) -> Vec<PlannedTrial> {
    let mut plan = Vec::new();
    for env in &grid.envs {
        plan.push(PlannedTrial::Parent { env: env.clone() });
    }
    for parent_env in &grid.envs {
        for child_env in &grid.envs {
            for &k in &grid.k_values {
                for &mode in &grid.modes {
                    for run in 0..grid.runs {
                        plan.push(PlannedTrial::Child {
                            parent_env: parent_env.clone(),
                            child_env: child_env.clone(),
                            k,
                            mode,
                            run,
                        });
                    }
                }
            }
        }
    }
    plan
}

/// Outcome counts for one `run_grid` invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GridSummary {
    pub planned: usize,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

enum Outcome {
    Executed,
    Skipped,
    Failed,
}

fn execute_trial(trial: &PlannedTrial, grid: &ExperimentGrid, out_dir: &Path) -> Outcome {
    let trial_id = trial.trial_id();
    let paths = TrialPaths::under(out_dir, &trial_id);
    // Curve files are written atomically, so their existence marks a
    // completed trial; resume skips it.
    if paths.curve.exists() {
        return Outcome::Skipped;
    }
    let result = match trial {
        PlannedTrial::Parent { env } => run_parent(
            env,
            &TrainLoopConfig {
                total_steps: grid.parent_steps,
                eval_every: GRID_EVAL_EVERY,
                eval_episodes: GRID_EVAL_EPISODES,
            },
            grid.base_seed,
            &paths,
        )
        .map(|_| ()),
        PlannedTrial::Child {
            parent_env,
            child_env,
            k,
            mode,
            run,
        } => {
            let parent_ckpt = TrialPaths::under(out_dir, &parent_trial_id(parent_env)).checkpoint;
            if parent_ckpt.exists() {
                run_child(
                    &ChildSpec {
                        parent_ckpt,
                        child_env: child_env.clone(),
                        k: *k,
                        mode: *mode,
                        run: *run,
                        base_seed: grid.base_seed,
                    },
                    &TrainLoopConfig {
                        total_steps: grid.child_steps,
                        eval_every: GRID_EVAL_EVERY,
                        eval_episodes: GRID_EVAL_EPISODES,
                    },
                    &paths,
                )
                .map(|_| ())
            } else {
                Err(HarnessError::MissingParent {
                    env: parent_env.clone(),
                    path: parent_ckpt.display().to_string(),
                })
            }
        }
    };
    match result {
        Ok(()) => Outcome::Executed,
        Err(err) => {
            let msg = format!("trial_id={}\nstatus=failed\nerror={}\n", trial_id, err);
            let _ = fs::write(
                out_dir.join("errors").join(format!("{}.error", trial_id)),
                msg,
            );
            Outcome::Failed
        }
    }
}

/// Runs every planned trial, parents first, on a pool of `workers` threads
/// (0 means one per CPU). Completed trials are skipped, failures are logged
/// under errors/ and do not halt the grid.
pub fn run_grid(
    grid: &ExperimentGrid,
    out_dir: &Path,
    workers: usize,
) -> Result<GridSummary, HarnessError> {
    let plan = plan_grid(grid);
    for sub in ["curves", "checkpoints", "records", "errors"] {
        fs::create_dir_all(out_dir.join(sub))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::BadConfig(format!("thread pool: {}", e)))?;

    let (parents, children): (Vec<_>, Vec<_>) = plan
        .iter()
        .partition(|t| matches!(t, PlannedTrial::Parent { .. }));

    let mut summary = GridSummary {
        planned: plan.len(),
        ..GridSummary::default()
    };
    // Children read parent checkpoints, so the two phases are barriered.
    for phase in [parents, children] {
        let outcomes: Vec<Outcome> = pool.install(|| {
            phase
                .par_iter()
                .map(|trial| execute_trial(trial, grid, out_dir))
                .collect()
        });
        for outcome in outcomes {
            match outcome {
                Outcome::Executed => summary.executed += 1,
                Outcome::Skipped => summary.skipped += 1,
                Outcome::Failed => summary.failed += 1,
            }
        }
    }
    Ok(summary)
}
