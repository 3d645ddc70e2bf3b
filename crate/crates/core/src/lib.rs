//! Desk-scale distributional Q-learning with layer-transplant transfer.
//!
//! The crate trains Rainbow-style agents (dueling double Q-learning over a
//! categorical value distribution, prioritized replay, n-step targets, noisy
//! linear layers) on three built-in grid games, performs layer-transplant
//! surgery between trained networks in freeze or fine-tune mode, and drives
//! the full transfer-experiment grid with learning-curve reporting.

pub mod agent;
pub mod envs;
pub mod harness;
pub mod hash;
pub mod nn;
pub mod replay;
pub mod surgery;
pub mod tensor;

pub use agent::{AgentConfig, AtomSupport, CategoricalDistribution, RainbowAgent};
pub use nn::{FreezeMask, Network, NoiseDraw};
pub use replay::{PrioritizedReplay, Transition};
pub use surgery::{Checkpoint, TransplantMode, TransplantSpec};
pub use tensor::Tensor;
