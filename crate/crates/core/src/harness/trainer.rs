//! Single-trial execution: the environment-interaction training loop, the
//! fixed-seed evaluation protocol, and the parent/child trial runners.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{child_trial_id, parent_trial_id, CurveRow, HarnessError, LearningCurve};
use crate::agent::{ActMode, AgentConfig, RainbowAgent};
use crate::envs::{make_env, Env, FrameStack};
use crate::hash::derive_seed;
use crate::nn::FreezeMask;
use crate::replay::{BufferConfig, NStepFolder, ObsStack, PrioritizedReplay, StepRecord};
use crate::surgery::{
    now_unix, transplant, verify_transplant, Checkpoint, CheckpointMeta, TransplantMode,
    TransplantSpec,
};

/// Base seed shared by every evaluation episode across all trials, so equal
/// policies produce bit-equal evaluation scores (identity-transplant checks
/// rely on this).
pub const EVAL_SEED_BASE: u64 = 0x5eed_ba5e;

#[derive(Debug, Clone, Copy)]
pub struct TrainLoopConfig {
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
}

impl Default for TrainLoopConfig {
    fn default() -> Self {
        Self {
            total_steps: 50_000,
            eval_every: 5_000,
            eval_episodes: 10,
        }
    }
}

impl TrainLoopConfig {
    pub fn with_total(total_steps: u64) -> Self {
        Self {
            total_steps,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalPoint {
    pub env_steps: u64,
    pub mean: f64,
    pub std: f64,
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the fixed evaluation protocol: `episodes` episodes with zero noise
/// on globally fixed seeds; returns (mean, std) of undiscounted returns.
pub fn evaluate_policy(
    agent: &RainbowAgent,
    env_name: &str,
    episodes: usize,
) -> Result<(f64, f64), HarnessError> {
    let mut env = make_env(env_name)?;
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let seed = derive_seed(EVAL_SEED_BASE, &format!("episode{}", ep));
        let frame = env.reset(seed);
        let mut stack = FrameStack::new(frame);
        let mut total = 0.0;
        loop {
            let action = agent.act_eval(&stack.stacked())?;
            let out = env.step(action)?;
            total += out.reward;
            stack.push(out.frame);
            if out.terminal {
                break;
            }
        }
        returns.push(total);
    }
    Ok(mean_std(&returns))
}

/// Drives `total_steps` environment interactions with n-step folding,
/// prioritized storage, the train_every cadence and periodic evaluations
/// (strictly inside the budget; step-0 and final evaluations are the
/// caller's responsibility).
pub fn train_loop(
    agent: &mut RainbowAgent,
    env: &mut dyn Env,
    replay: &mut PrioritizedReplay,
    mask: &FreezeMask,
    cfg: &TrainLoopConfig,
    trial_seed: u64,
    mut on_eval: impl FnMut(EvalPoint),
) -> Result<(), HarnessError> {
    if cfg.total_steps == 0 {
        return Ok(());
    }
    let mut episode_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, "env-episodes"));
    let mut folder = NStepFolder::new(agent.config().n_step, agent.config().gamma);
    let frame = env.reset(episode_rng.gen());
    let mut stack = FrameStack::new(frame);

    for step in 1..=cfg.total_steps {
        let obs = stack.stacked();
        let action = agent.act(&obs, ActMode::Train)?;
        let out = env.step(action)?;
        agent.note_env_step();
        stack.push(out.frame);
        let next = stack.stacked();
        for tr in folder.push(StepRecord {
            obs: ObsStack::from_tensor(&obs),
            action,
            reward: out.reward,
            next_obs: ObsStack::from_tensor(&next),
            terminal: out.terminal,
        }) {
            replay.push(tr, None);
        }
        if out.terminal {
            let frame = env.reset(episode_rng.gen());
            stack = FrameStack::new(frame);
        }

        if agent.due_for_training() {
            let beta = replay
                .config()
                .beta_at(step as f64 / cfg.total_steps as f64);
            agent.train_step(replay, beta, mask)?;
        }
        if step % cfg.eval_every == 0 && step < cfg.total_steps {
            let (mean, std) = evaluate_policy(agent, env.name(), cfg.eval_episodes)?;
            on_eval(EvalPoint {
                env_steps: step,
                mean,
                std,
            });
        }
    }
    // A partial n-step window at the budget edge is dropped, not flushed:
    // its bootstrap observation was never reached.
    folder.reset();
    Ok(())
}

/// Output files produced by one trial.
#[derive(Debug, Clone)]
pub struct TrialPaths {
    pub curve: PathBuf,
    pub checkpoint: PathBuf,
    pub record: PathBuf,
}

impl TrialPaths {
    /// Standard layout under a grid output directory.
    pub fn under(out_dir: &Path, trial_id: &str) -> Self {
        Self {
            curve: out_dir.join("curves").join(format!("{}.csv", trial_id)),
            checkpoint: out_dir
                .join("checkpoints")
                .join(format!("{}.ckpt", trial_id)),
            record: out_dir.join("records").join(format!("{}.txt", trial_id)),
        }
    }
}

fn write_record(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("txt.tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Trains a fresh agent on `env_name` for a fixed budget and writes the
/// checkpoint, learning curve and trial record. The final curve row is
/// evaluated from the saved-then-reloaded checkpoint, so it reflects exactly
/// what a child will load. `base_seed` is hashed with the trial id.
pub fn run_parent(
    env_name: &str,
    loop_cfg: &TrainLoopConfig,
    base_seed: u64,
    paths: &TrialPaths,
) -> Result<LearningCurve, HarnessError> {
    let start = Instant::now();
    let trial_id = parent_trial_id(env_name);
    let trial_seed = derive_seed(base_seed, &trial_id);
    let mut env = make_env(env_name)?;
    let agent_cfg = AgentConfig::default();
    let mut agent = RainbowAgent::new(agent_cfg, env.spec().n_actions, trial_seed)?;
    let mut replay = PrioritizedReplay::new(BufferConfig::default());

    let mut curve = LearningCurve::new();
    let row = |env_steps: u64, mean: f64, std: f64, wall: f64| CurveRow {
        trial_id: trial_id.clone(),
        parent_env: env_name.to_string(),
        child_env: env_name.to_string(),
        k: None,
        mode: "scratch".to_string(),
        run: 0,
        env_steps,
        eval_return_mean: mean,
        eval_return_std: std,
        wall_clock_seconds: wall,
    };

    if loop_cfg.total_steps > 0 {
        let (mean, std) = evaluate_policy(&agent, env_name, loop_cfg.eval_episodes)?;
        curve.rows.push(row(0, mean, std, start.elapsed().as_secs_f64()));
    }
    {
        let curve = &mut curve;
        train_loop(
            &mut agent,
            env.as_mut(),
            &mut replay,
            &FreezeMask::empty(),
            loop_cfg,
            trial_seed,
            |p| {
                curve
                    .rows
                    .push(row(p.env_steps, p.mean, p.std, start.elapsed().as_secs_f64()));
            },
        )?;
    }

    let meta = CheckpointMeta {
        env: env_name.to_string(),
        train_steps: loop_cfg.total_steps,
        seed: trial_seed,
        n_actions: 0,
        n_atoms: 0,
        architecture_hash: 0,
        created_unix: now_unix(),
        extra: Default::default(),
    };
    Checkpoint::from_network(agent.online(), meta).save(&paths.checkpoint)?;

    // Final evaluation from the artifact a child would actually load.
    let reloaded = Checkpoint::load(&paths.checkpoint)?;
    let final_agent = RainbowAgent::from_network(agent_cfg, reloaded.to_network()?, trial_seed)?;
    let (mean, std) = evaluate_policy(&final_agent, env_name, loop_cfg.eval_episodes)?;
    curve.rows.push(row(
        loop_cfg.total_steps,
        mean,
        std,
        start.elapsed().as_secs_f64(),
    ));
    curve.write_csv(&paths.curve)?;

    write_record(
        &paths.record,
        &format!(
            "trial_id={}\nkind=parent\nenv={}\nsteps={}\nseed={}\nfinal_eval_mean={}\nstatus=ok\n",
            trial_id, env_name, loop_cfg.total_steps, trial_seed, mean
        ),
    )?;
    Ok(curve)
}

/// Everything needed to run one transplant-child trial.
#[derive(Debug, Clone)]
pub struct ChildSpec {
    pub parent_ckpt: PathBuf,
    pub child_env: String,
    pub k: usize,
    pub mode: TransplantMode,
    pub run: u32,
    pub base_seed: u64,
}

/// Transplants from the parent checkpoint, trains on the child environment,
/// and writes curve/checkpoint/record. The record embeds the construction
/// transplant audit and, in freeze mode, a post-training bitwise audit of
/// the transplanted prefix.
pub fn run_child(
    spec: &ChildSpec,
    loop_cfg: &TrainLoopConfig,
    paths: &TrialPaths,
) -> Result<LearningCurve, HarnessError> {
    let start = Instant::now();
    let parent_ck = Checkpoint::load(&spec.parent_ckpt)?;
    let parent_env = parent_ck.meta.env.clone();
    let trial_id = child_trial_id(spec.k, spec.mode, &parent_env, &spec.child_env, spec.run);
    let trial_seed = derive_seed(spec.base_seed, &trial_id);

    let (child_net, mask) = transplant(
        &parent_ck,
        &TransplantSpec {
            k: spec.k,
            mode: spec.mode,
            reinit_seed: derive_seed(trial_seed, "reinit"),
        },
    )?;
    let agent_cfg = AgentConfig::default();
    let mut agent = RainbowAgent::from_network(agent_cfg, child_net, trial_seed)?;
    let mut replay = PrioritizedReplay::new(BufferConfig::default());
    let mut env = make_env(&spec.child_env)?;

    let child_meta = |train_steps: u64| CheckpointMeta {
        env: spec.child_env.clone(),
        train_steps,
        seed: trial_seed,
        n_actions: 0,
        n_atoms: 0,
        architecture_hash: 0,
        created_unix: now_unix(),
        extra: Default::default(),
    };

    // Audit the surgery before any training touches the parameters.
    let t0_ck = Checkpoint::from_network(agent.online(), child_meta(0));
    let construction_audit = verify_transplant(&parent_ck, &t0_ck, spec.k)?;

    let mut curve = LearningCurve::new();
    let row = |env_steps: u64, mean: f64, std: f64, wall: f64| CurveRow {
        trial_id: trial_id.clone(),
        parent_env: parent_env.clone(),
        child_env: spec.child_env.clone(),
        k: Some(spec.k),
        mode: spec.mode.trial_str().to_string(),
        run: spec.run,
        env_steps,
        eval_return_mean: mean,
        eval_return_std: std,
        wall_clock_seconds: wall,
    };

    if loop_cfg.total_steps > 0 {
        let (mean, std) = evaluate_policy(&agent, &spec.child_env, loop_cfg.eval_episodes)?;
        curve.rows.push(row(0, mean, std, start.elapsed().as_secs_f64()));
    }
    {
        let curve = &mut curve;
        train_loop(
            &mut agent,
            env.as_mut(),
            &mut replay,
            &mask,
            loop_cfg,
            trial_seed,
            |p| {
                curve
                    .rows
                    .push(row(p.env_steps, p.mean, p.std, start.elapsed().as_secs_f64()));
            },
        )?;
    }

    Checkpoint::from_network(agent.online(), child_meta(loop_cfg.total_steps))
        .save(&paths.checkpoint)?;
    let reloaded = Checkpoint::load(&paths.checkpoint)?;
    let final_agent = RainbowAgent::from_network(agent_cfg, reloaded.to_network()?, trial_seed)?;
    let (mean, std) = evaluate_policy(&final_agent, &spec.child_env, loop_cfg.eval_episodes)?;
    curve.rows.push(row(
        loop_cfg.total_steps,
        mean,
        std,
        start.elapsed().as_secs_f64(),
    ));
    curve.write_csv(&paths.curve)?;

    let mut record = format!(
        "trial_id={}\nkind=child\nparent_env={}\nchild_env={}\nk={}\nmode={}\nrun={}\nseed={}\nsteps={}\nfinal_eval_mean={}\nstatus=ok\n\n{}\n",
        trial_id,
        parent_env,
        spec.child_env,
        spec.k,
        spec.mode,
        spec.run,
        trial_seed,
        loop_cfg.total_steps,
        mean,
        construction_audit
    );
    if spec.mode == TransplantMode::Freeze {
        let post = verify_transplant(&parent_ck, &reloaded, spec.k)?;
        let frozen_ok = post.depth_equal[..spec.k].iter().all(|&e| e);
        record.push_str(&format!(
            "\nfreeze audit after training: layers 1..={} bitwise equal parent: {}\n",
            spec.k,
            if frozen_ok { "pass" } else { "FAIL" }
        ));
    }
    write_record(&paths.record, &record)?;
    Ok(curve)
}
