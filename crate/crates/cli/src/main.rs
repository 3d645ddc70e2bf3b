//! `rtl` — train Rainbow agents on the grid environments, transplant layers
//! between them, and orchestrate the full transfer grid.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Context;
use clap::{Parser, Subcommand};

use rtl_core::harness::{
    report, run_child, run_grid, run_parent, ChildSpec, ExperimentGrid, TrainLoopConfig,
    TrialPaths,
};
use rtl_core::hash::derive_seed;
use rtl_core::surgery::{
    now_unix, transplant, verify_transplant, Checkpoint, CheckpointMeta, TransplantMode,
    TransplantSpec,
};

#[derive(Parser)]
#[command(name = "rtl", version, about = "Layer-transplant experiments for Rainbow agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a parent agent from scratch and write its checkpoint.
    TrainParent {
        /// Environment name: corridor, chase or river.
        #[arg(long)]
        env: String,
        /// Environment-interaction budget.
        #[arg(long)]
        steps: u64,
        /// Base seed; the trial seed is derived from it and the trial id.
        #[arg(long)]
        seed: u64,
        /// Checkpoint output path. The learning curve and trial record are
        /// written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a child checkpoint by transplanting the first k layers of a
    /// parent into a freshly initialized network, without training it.
    Transplant {
        /// Parent checkpoint path.
        #[arg(long)]
        parent: PathBuf,
        /// Number of leading depth positions to copy (0..=5).
        #[arg(long)]
        k: usize,
        /// freeze or finetune.
        #[arg(long)]
        mode: String,
        /// Seed for the reinitialized suffix.
        #[arg(long)]
        seed: u64,
        /// Child checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one transplant-child trial: surgery, training on the child
    /// environment, curve and checkpoint.
    RunChild {
        /// Parent checkpoint path.
        #[arg(long)]
        parent: PathBuf,
        /// Child environment name.
        #[arg(long)]
        env: String,
        /// Number of leading depth positions to copy.
        #[arg(long)]
        k: usize,
        /// freeze or finetune.
        #[arg(long)]
        mode: String,
        /// Environment-interaction budget.
        #[arg(long)]
        steps: u64,
        /// Base seed; the trial seed is derived from it and the trial id.
        #[arg(long)]
        seed: u64,
        /// Output directory (curves/, checkpoints/, records/ layout).
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the whole transfer grid described by a config file.
    RunGrid {
        /// Grid config (key=value lines).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; completed trials found here are skipped.
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads (0 = one per CPU).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Aggregate learning curves into a summary table and plot series.
    Report {
        /// Grid output directory (or a directory of curve CSVs).
        #[arg(long)]
        in_dir: PathBuf,
        /// Summary CSV path; plot_{env}.csv files are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(mode: &str) -> anyhow::Result<TransplantMode> {
    TransplantMode::from_str(mode)
        .map_err(|_| anyhow::anyhow!("mode must be freeze or finetune, got {:?}", mode))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::TrainParent {
            env,
            steps,
            seed,
            out,
        } => {
            let paths = TrialPaths {
                curve: out.with_extension("curve.csv"),
                checkpoint: out.clone(),
                record: out.with_extension("record.txt"),
            };
            let curve = run_parent(&env, &TrainLoopConfig::with_total(steps), seed, &paths)
                .with_context(|| format!("training parent on {}", env))?;
            let last = curve.rows.last().expect("curve has a final row");
            println!(
                "trained {} for {} steps: final eval return {:.3} ± {:.3}",
                env, steps, last.eval_return_mean, last.eval_return_std
            );
            println!("checkpoint: {}", paths.checkpoint.display());
            println!("curve:      {}", paths.curve.display());
        }
        Command::Transplant {
            parent,
            k,
            mode,
            seed,
            out,
        } => {
            let mode = parse_mode(&mode)?;
            let parent_ck = Checkpoint::load(&parent)
                .with_context(|| format!("loading parent {}", parent.display()))?;
            let (child, mask) = transplant(
                &parent_ck,
                &TransplantSpec {
                    k,
                    mode,
                    reinit_seed: derive_seed(seed, "reinit"),
                },
            )?;
            let mut meta = CheckpointMeta {
                env: parent_ck.meta.env.clone(),
                train_steps: 0,
                seed,
                n_actions: 0,
                n_atoms: 0,
                architecture_hash: 0,
                created_unix: now_unix(),
                extra: Default::default(),
            };
            meta.extra.insert("transplant_k".into(), k.to_string());
            meta.extra
                .insert("transplant_mode".into(), mode.to_string());
            meta.extra
                .insert("parent_env".into(), parent_ck.meta.env.clone());
            let child_ck = Checkpoint::from_network(&child, meta);
            let audit = verify_transplant(&parent_ck, &child_ck, k)?;
            child_ck.save(&out)?;
            println!("{}", audit);
            println!(
                "frozen layers: {}",
                if mask.is_empty() {
                    "none".to_string()
                } else {
                    mask.names().collect::<Vec<_>>().join(", ")
                }
            );
            println!("child checkpoint: {}", out.display());
        }
        Command::RunChild {
            parent,
            env,
            k,
            mode,
            steps,
            seed,
            out_dir,
        } => {
            let mode = parse_mode(&mode)?;
            let parent_ck = Checkpoint::load(&parent)
                .with_context(|| format!("loading parent {}", parent.display()))?;
            let trial_id = rtl_core::harness::child_trial_id(k, mode, &parent_ck.meta.env, &env, 0);
            let paths = TrialPaths::under(&out_dir, &trial_id);
            let spec = ChildSpec {
                parent_ckpt: parent,
                child_env: env,
                k,
                mode,
                run: 0,
                base_seed: seed,
            };
            let curve = run_child(&spec, &TrainLoopConfig::with_total(steps), &paths)
                .with_context(|| format!("running child trial {}", trial_id))?;
            let last = curve.rows.last().expect("curve has a final row");
            println!(
                "{}: final eval return {:.3} ± {:.3}",
                trial_id, last.eval_return_mean, last.eval_return_std
            );
            println!("curve: {}", paths.curve.display());
        }
        Command::RunGrid {
            config,
            out_dir,
            workers,
        } => {
            let grid = ExperimentGrid::load(&config)
                .with_context(|| format!("reading grid config {}", config.display()))?;
            let summary = run_grid(&grid, &out_dir, workers)?;
            println!(
                "grid complete: {} planned, {} executed, {} skipped, {} failed",
                summary.planned, summary.executed, summary.skipped, summary.failed
            );
            if summary.failed > 0 {
                anyhow::bail!(
                    "{} trial(s) failed; see {}",
                    summary.failed,
                    out_dir.join("errors").display()
                );
            }
        }
        Command::Report { in_dir, out } => {
            let paths = report(&in_dir, &out)?;
            println!("summary: {}", paths.summary.display());
            for plot in &paths.plots {
                println!("plot:    {}", plot.display());
            }
        }
    }
    Ok(())
}
