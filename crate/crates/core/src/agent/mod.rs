//! The distributional dueling double-Q agent: noisy-net action selection,
//! n-step categorical targets, prioritized-replay training with
//! importance-sampling weights, and periodic target synchronization.

mod distribution;

pub use distribution::{
    argmax_tie_low, categorical_project, AtomSupport, CategoricalDistribution,
};

use distribution::{log_softmax, softmax_into};

use crate::nn::{
    apply_gradients, AdamConfig, FreezeMask, GradientSet, Network, NnError, NoiseDraw,
    OptimizerState,
};
use crate::replay::{PrioritizedReplay, ReplayError, Transition};
use crate::tensor::Tensor;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy)]
pub struct AgentConfig {
    pub gamma: f64,
    pub n_step: usize,
    /// Environment steps between target-network syncs.
    pub target_sync_period: u32,
    pub batch_size: usize,
    /// Environment steps per gradient step.
    pub train_every: u32,
    /// Environment steps before the first gradient step.
    pub warmup_steps: u32,
    /// Frame-history depth; the architecture fixes this at 4.
    pub history_len: usize,
    pub n_atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_step: 3,
            target_sync_period: 2000,
            batch_size: 32,
            train_every: 4,
            warmup_steps: 1000,
            history_len: 4,
            n_atoms: 21,
            v_min: -10.0,
            v_max: 10.0,
        }
    }
}

impl AgentConfig {
    fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::InvalidConfig(format!(
                "gamma {} outside [0,1]",
                self.gamma
            )));
        }
        if self.n_step < 1 || self.batch_size < 1 || self.train_every < 1 {
            return Err(AgentError::InvalidConfig(
                "n_step, batch_size and train_every must be >= 1".into(),
            ));
        }
        if self.history_len != 4 {
            return Err(AgentError::InvalidConfig(format!(
                "history_len is fixed at 4, got {}",
                self.history_len
            )));
        }
        Ok(())
    }
}

/// Whether action selection explores (fresh noise) or exploits (zero noise).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Train,
    Eval,
}

/// Loss and per-sample priorities produced by one gradient step.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss: f64,
    pub td_errors: Vec<f64>,
}

/// Selects a* with the online network and evaluates it under the target
/// network, then projects the n-step distributional Bellman update. One row
/// per transition. `noise_sel`/`noise_eval` apply to the online/target
/// forwards respectively; `None` means zero noise.
pub fn compute_target_rows(
    online: &Network,
    target: &Network,
    support: &AtomSupport,
    gamma: f64,
    batch: &[&Transition],
    noise_sel: Option<&NoiseDraw>,
    noise_eval: Option<&NoiseDraw>,
) -> Result<Vec<Vec<f64>>, NnError> {
    let eff_sel = online.materialize(noise_sel);
    let eff_eval = target.materialize(noise_eval);
    let mut rows = Vec::with_capacity(batch.len());
    for tr in batch {
        let next = tr.next_obs.to_tensor();
        let (sel_logits, _) = online.forward(&eff_sel, &next)?;
        let sel_dist = CategoricalDistribution::from_logits(&sel_logits);
        let a_star = argmax_tie_low(&sel_dist.q_values(support));

        let (eval_logits, _) = target.forward(&eff_eval, &next)?;
        let eval_dist = CategoricalDistribution::from_logits(&eval_logits);

        let discount_n = if tr.terminal {
            0.0
        } else {
            gamma.powi(tr.n_actual as i32)
        };
        rows.push(categorical_project(
            eval_dist.row(a_star),
            tr.return_g,
            discount_n,
            support,
        ));
    }
    Ok(rows)
}

/// Online/target networks, optimizer and exploration-noise stream for one
/// training run. Single-owner; distinct agents are fully independent.
#[derive(Debug)]
pub struct RainbowAgent {
    cfg: AgentConfig,
    support: AtomSupport,
    online: Network,
    target: Network,
    opt: OptimizerState,
    rng: ChaCha8Rng,
    env_steps: u64,
    train_steps: u64,
    steps_since_sync: u32,
}

impl RainbowAgent {
    /// Fresh agent with a newly initialized default network.
    pub fn new(cfg: AgentConfig, n_actions: usize, seed: u64) -> Result<Self, AgentError> {
        let net = Network::new_default(
            n_actions,
            cfg.n_atoms,
            crate::hash::derive_seed(seed, "net-init"),
        );
        Self::from_network(cfg, net, seed)
    }

    /// Agent wrapping an existing online network (e.g. after a transplant).
    /// The target starts as a copy; optimizer and counters start fresh.
    pub fn from_network(cfg: AgentConfig, online: Network, seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let support = AtomSupport::new(cfg.n_atoms, cfg.v_min, cfg.v_max)?;
        if online.n_atoms() != cfg.n_atoms {
            return Err(AgentError::InvalidConfig(format!(
                "network has {} atoms, config {}",
                online.n_atoms(),
                cfg.n_atoms
            )));
        }
        let target = online.clone();
        let opt = OptimizerState::new(&online, AdamConfig::default());
        Ok(Self {
            cfg,
            support,
            online,
            target,
            opt,
            rng: ChaCha8Rng::seed_from_u64(crate::hash::derive_seed(seed, "agent-noise")),
            env_steps: 0,
            train_steps: 0,
            steps_since_sync: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn support(&self) -> &AtomSupport {
        &self.support
    }

    pub fn online(&self) -> &Network {
        &self.online
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Records one environment interaction; drives warmup, the train_every
    /// cadence and the sync clock.
    pub fn note_env_step(&mut self) {
        self.env_steps += 1;
        self.steps_since_sync += 1;
    }

    /// True when the training cadence calls for a gradient step now.
    pub fn due_for_training(&self) -> bool {
        self.env_steps >= self.cfg.warmup_steps as u64
            && self.env_steps.is_multiple_of(self.cfg.train_every as u64)
    }

    /// Picks an action for a stacked observation. Training mode resamples
    /// exploration noise; eval mode zeroes it. Ties break low.
    pub fn act(&mut self, stacked: &Tensor, mode: ActMode) -> Result<usize, AgentError> {
        let draw;
        let noise = match mode {
            ActMode::Train => {
                draw = self.online.sample_noise(&mut self.rng);
                Some(&draw)
            }
            ActMode::Eval => None,
        };
        let (logits, _) = self.online.forward_pass(stacked, noise)?;
        let dist = CategoricalDistribution::from_logits(&logits);
        Ok(argmax_tie_low(&dist.q_values(&self.support)))
    }

    /// Deterministic greedy action with zero noise; no mutable state.
    pub fn act_eval(&self, stacked: &Tensor) -> Result<usize, AgentError> {
        let (logits, _) = self.online.forward_pass(stacked, None)?;
        let dist = CategoricalDistribution::from_logits(&logits);
        Ok(argmax_tie_low(&dist.q_values(&self.support)))
    }

    /// One prioritized gradient step. Returns Ok(None) while the buffer or
    /// warmup is insufficient. `beta` is the current IS exponent;
    /// `freeze_mask` excludes transplanted layers from the update.
    pub fn train_step(
        &mut self,
        replay: &mut PrioritizedReplay,
        beta: f64,
        freeze_mask: &FreezeMask,
    ) -> Result<Option<TrainReport>, AgentError> {
        if self.env_steps < self.cfg.warmup_steps as u64
            || replay.len() < self.cfg.batch_size
        {
            return Ok(None);
        }
        let batch_size = self.cfg.batch_size;
        let sample = replay.sample(batch_size, beta, &mut self.rng)?;
        let batch: Vec<&Transition> = sample.indices.iter().map(|&i| replay.get(i)).collect();

        // One fresh draw per forward group, shared across the batch.
        let noise_online = self.online.sample_noise(&mut self.rng);
        let noise_sel = self.online.sample_noise(&mut self.rng);
        let noise_eval = self.target.sample_noise(&mut self.rng);

        let targets = compute_target_rows(
            &self.online,
            &self.target,
            &self.support,
            self.cfg.gamma,
            &batch,
            Some(&noise_sel),
            Some(&noise_eval),
        )?;

        let eff = self.online.materialize(Some(&noise_online));
        let n_actions = self.online.n_actions();
        let n_atoms = self.cfg.n_atoms;
        let mut grads = GradientSet::zeros_like(&self.online);
        let mut td_errors = Vec::with_capacity(batch_size);
        let mut loss = 0.0;
        for (k, tr) in batch.iter().enumerate() {
            let obs = tr.obs.to_tensor();
            let (logits, cache) = self.online.forward(&eff, &obs)?;
            let row = &logits.data()[tr.action * n_atoms..(tr.action + 1) * n_atoms];
            let log_p = log_softmax(row);
            let ce: f64 = -targets[k]
                .iter()
                .zip(log_p.iter())
                .map(|(t, lp)| t * lp)
                .sum::<f64>();
            td_errors.push(ce);
            let w = sample.is_weights[k] / batch_size as f64;
            loss += w * ce;

            // d(ce)/d(logit) = softmax(logit) - target, on the chosen row.
            let mut p = vec![0.0; n_atoms];
            softmax_into(row, &mut p);
            let mut d_logits = vec![0.0; n_actions * n_atoms];
            for i in 0..n_atoms {
                d_logits[tr.action * n_atoms + i] = w * (p[i] - targets[k][i]);
            }
            let d_logits = Tensor::new(vec![n_actions, n_atoms], d_logits);
            self.online.backward_into(&eff, &cache, &d_logits, &mut grads)?;
        }

        apply_gradients(&mut self.online, &grads, &mut self.opt, freeze_mask)?;
        replay.update_priorities(&sample.indices, &td_errors)?;
        self.train_steps += 1;

        if self.steps_since_sync >= self.cfg.target_sync_period {
            self.sync_target();
        }
        Ok(Some(TrainReport { loss, td_errors }))
    }

    /// Copies online parameters into the target network bitwise.
    pub fn sync_target(&mut self) {
        self.target.copy_params_from(&self.online);
        self.steps_since_sync = 0;
    }
}
