//! Prioritized experience replay: ring storage over a sum-tree, stratified
//! sampling with importance-sampling weights, and n-step folding.

mod nstep;
mod sum_tree;

pub use nstep::{NStepFolder, StepRecord};
pub use sum_tree::SumTree;

use crate::tensor::Tensor;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("buffer holds {size} transitions, need at least {need}")]
    InsufficientSize { size: usize, need: usize },
    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("got {indices} indices but {errors} td errors")]
    LengthMismatch { indices: usize, errors: usize },
}

/// A stacked observation stored at f32 precision. Observations dominate
/// buffer memory (two stacks per transition), and every rendered cell value
/// is f32-exact, so the narrowing loses nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsStack {
    data: Box<[f32]>,
    shape: [usize; 3],
}

impl ObsStack {
    pub fn from_raw(data: Vec<f32>, shape: [usize; 3]) -> Self {
        assert_eq!(data.len(), shape.iter().product::<usize>());
        Self {
            data: data.into_boxed_slice(),
            shape,
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        assert_eq!(t.shape().len(), 3, "observation stacks are rank 3");
        let shape = [t.shape()[0], t.shape()[1], t.shape()[2]];
        let data = t.iter().map(|&v| v as f32).collect::<Vec<f32>>();
        Self::from_raw(data, shape)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            self.shape.to_vec(),
            self.data.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }
}

/// One n-step transition: (s_t, a_t, G, s_{t+n_actual}, terminal).
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: ObsStack,
    pub action: usize,
    /// Discounted n-step return G = sum of gamma^i * r_{t+i}.
    pub return_g: f64,
    pub next_obs: ObsStack,
    pub terminal: bool,
    /// Steps actually folded; below n_step only at episode end.
    pub n_actual: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct BufferConfig {
    pub capacity: usize,
    /// Priority exponent alpha in [0, 1].
    pub alpha: f64,
    /// Initial importance-sampling exponent beta, annealed toward
    /// `beta_final` by the training loop (sample() takes beta explicitly).
    pub beta0: f64,
    pub beta_final: f64,
    /// Additive floor keeping every stored priority positive.
    pub priority_epsilon: f64,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            capacity: 50_000,
            alpha: 0.5,
            beta0: 0.4,
            beta_final: 1.0,
            priority_epsilon: 1e-6,
        }
    }
}

impl BufferConfig {
    /// Linearly annealed beta at training progress in [0, 1].
    pub fn beta_at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.beta0 + (self.beta_final - self.beta0) * p
    }
}

/// Indices and normalized importance weights returned by `sample`.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub indices: Vec<usize>,
    pub is_weights: Vec<f64>,
}

/// Ring buffer of transitions with proportional prioritization.
#[derive(Debug)]
pub struct PrioritizedReplay {
    cfg: BufferConfig,
    tree: SumTree,
    items: Vec<Transition>,
    next_slot: usize,
    /// Largest raw (untransformed) priority seen; new transitions default to
    /// it so they are sampled at least once. Starts at 1.
    max_raw_priority: f64,
}

impl PrioritizedReplay {
    pub fn new(cfg: BufferConfig) -> Self {
        assert!((0.0..=1.0).contains(&cfg.alpha), "alpha must be in [0,1]");
        assert!(
            cfg.beta0 > 0.0 && cfg.beta0 <= 1.0,
            "beta0 must be in (0,1]"
        );
        assert!(cfg.capacity >= 1);
        Self {
            tree: SumTree::new(cfg.capacity),
            items: Vec::with_capacity(cfg.capacity.min(4096)),
            next_slot: 0,
            max_raw_priority: 1.0,
            cfg,
        }
    }

    pub fn config(&self) -> &BufferConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cfg.capacity
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Raw-to-stored priority transform: (p + epsilon)^alpha.
    fn transform(&self, raw: f64) -> f64 {
        (raw + self.cfg.priority_epsilon).powf(self.cfg.alpha)
    }

    /// Appends (or ring-overwrites) a transition. With `initial_priority`
    /// None the current maximum raw priority is used.
    pub fn push(&mut self, transition: Transition, initial_priority: Option<f64>) {
        let raw = initial_priority.unwrap_or(self.max_raw_priority);
        self.max_raw_priority = self.max_raw_priority.max(raw);
        let slot = self.next_slot;
        if slot < self.items.len() {
            self.items[slot] = transition;
        } else {
            self.items.push(transition);
        }
        self.tree.set(slot, self.transform(raw));
        self.next_slot = (slot + 1) % self.cfg.capacity;
    }

    /// Stratified sample of `batch_size` indices with IS weights normalized
    /// by the batch maximum.
    pub fn sample<R: Rng>(
        &self,
        batch_size: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<SampleBatch, ReplayError> {
        if self.len() < batch_size {
            return Err(ReplayError::InsufficientSize {
                size: self.len(),
                need: batch_size,
            });
        }
        let total = self.tree.total();
        let segment = total / batch_size as f64;
        let n = self.len() as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let lo = segment * k as f64;
            let u = lo + rng.gen::<f64>() * segment;
            // Clamp to live slots: the descent can run past the last written
            // leaf when u lands on the zero-mass tail at total.
            let idx = self.tree.find_prefix(u).min(self.len() - 1);
            let p = self.tree.get(idx) / total;
            weights.push((n * p).powf(-beta));
            indices.push(idx);
        }
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        Ok(SampleBatch {
            indices,
            is_weights: weights,
        })
    }

    /// Re-prioritizes sampled transitions from their TD errors.
    pub fn update_priorities(
        &mut self,
        indices: &[usize],
        td_errors: &[f64],
    ) -> Result<(), ReplayError> {
        if indices.len() != td_errors.len() {
            return Err(ReplayError::LengthMismatch {
                indices: indices.len(),
                errors: td_errors.len(),
            });
        }
        for (&idx, &err) in indices.iter().zip(td_errors.iter()) {
            if idx >= self.len() {
                return Err(ReplayError::IndexOutOfRange {
                    index: idx,
                    size: self.len(),
                });
            }
            let raw = err.abs();
            self.max_raw_priority = self.max_raw_priority.max(raw);
            self.tree.set(idx, self.transform(raw));
        }
        Ok(())
    }

    /// Consistency diagnostic forwarded from the tree.
    pub fn max_tree_error(&self) -> f64 {
        self.tree.max_node_error()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }
}
