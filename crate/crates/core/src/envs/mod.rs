//! Three built-in grid environments sharing one observation/action interface,
//! plus 4-frame history stacking.
//!
//! All three render 10x10 single-channel frames with the same cell palette
//! and expose five actions (noop, up, down, left, right) capped at 200 steps
//! per episode, so a network trained on one can be transplanted onto another.

mod chase;
mod corridor;
mod river;

pub use chase::Chase;
pub use corridor::Corridor;
pub use river::River;

use std::collections::VecDeque;

use crate::tensor::Tensor;
use thiserror::Error;

pub const GRID: usize = 10;
pub const N_ACTIONS: usize = 5;
pub const MAX_EPISODE_STEPS: u32 = 200;

/// Cell palette. Values are f32-exact so observations survive f32 replay
/// storage bitwise.
pub const EMPTY: f64 = 0.0;
pub const HAZARD: f64 = 0.33_f32 as f64;
pub const GOAL: f64 = 0.66_f32 as f64;
pub const AGENT: f64 = 1.0;

/// Action indices.
pub const NOOP: usize = 0;
pub const UP: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;
pub const RIGHT: usize = 4;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on terminal episode; reset first")]
    StepAfterTerminal,
    #[error("action {0} out of range (5 actions)")]
    InvalidAction(usize),
    #[error("unknown environment {0:?}; expected corridor, chase or river")]
    UnknownEnv(String),
}

/// Shared interface contract; identical for all built-in environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub obs_shape: [usize; 3],
    pub n_actions: usize,
    pub max_episode_steps: u32,
}

impl EnvSpec {
    pub fn standard() -> Self {
        Self {
            obs_shape: [GRID, GRID, 1],
            n_actions: N_ACTIONS,
            max_episode_steps: MAX_EPISODE_STEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub frame: Tensor,
    pub reward: f64,
    pub terminal: bool,
}

pub trait Env: Send {
    fn name(&self) -> &'static str;

    fn spec(&self) -> EnvSpec {
        EnvSpec::standard()
    }

    /// Starts a fresh episode; layout is a pure function of the seed.
    fn reset(&mut self, seed: u64) -> Tensor;

    /// Advances one step. Deterministic given (seed, action history).
    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;
}

/// Instantiates an environment from its wire name.
pub fn make_env(name: &str) -> Result<Box<dyn Env>, EnvError> {
    match name {
        "corridor" => Ok(Box::new(Corridor::new())),
        "chase" => Ok(Box::new(Chase::new())),
        "river" => Ok(Box::new(River::new())),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

pub const ENV_NAMES: [&str; 3] = ["corridor", "chase", "river"];

/// Rolling window of the last four frames, newest last.
#[derive(Debug, Clone)]
pub struct FrameStack {
    frames: VecDeque<Tensor>,
}

pub const HISTORY_LEN: usize = 4;

impl FrameStack {
    /// Seeds the history with four copies of the initial frame.
    pub fn new(initial: Tensor) -> Self {
        let mut frames = VecDeque::with_capacity(HISTORY_LEN);
        for _ in 0..HISTORY_LEN {
            frames.push_back(initial.clone());
        }
        Self { frames }
    }

    pub fn push(&mut self, frame: Tensor) {
        self.frames.pop_front();
        self.frames.push_back(frame);
    }

    /// Stacked observation [10, 10, 4], channel order oldest to newest.
    pub fn stacked(&self) -> Tensor {
        let h = GRID;
        let w = GRID;
        let mut data = vec![0.0; h * w * HISTORY_LEN];
        for (c, frame) in self.frames.iter().enumerate() {
            let fd = frame.data();
            for cell in 0..h * w {
                data[cell * HISTORY_LEN + c] = fd[cell];
            }
        }
        Tensor::new(vec![h, w, HISTORY_LEN], data)
    }
}

/// Grid position helpers shared by the concrete environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub r: usize,
    pub c: usize,
}

impl Pos {
    /// Applies an action, clamped to `rows`/`cols` bounds (wall bumps are
    /// no-ops). Returns the resulting position.
    pub fn moved(self, action: usize, rows: std::ops::RangeInclusive<usize>) -> Pos {
        let mut r = self.r as i32;
        let mut c = self.c as i32;
        match action {
            UP => r -= 1,
            DOWN => r += 1,
            LEFT => c -= 1,
            RIGHT => c += 1,
            _ => {}
        }
        let r = r.clamp(*rows.start() as i32, *rows.end() as i32) as usize;
        let c = c.clamp(0, GRID as i32 - 1) as usize;
        Pos { r, c }
    }
}

/// Renders a frame from (value, position) pairs; later entries win on
/// overlap, so the agent is conventionally drawn last.
pub(crate) fn render(cells: &[(Pos, f64)]) -> Tensor {
    let mut data = vec![EMPTY; GRID * GRID];
    for (pos, value) in cells {
        data[pos.r * GRID + pos.c] = *value;
    }
    Tensor::new(vec![GRID, GRID, 1], data)
}

/// Draws a position uniformly from the grid, rejecting `taken` cells.
pub(crate) fn random_free_cell<R: rand::Rng>(rng: &mut R, taken: &[Pos]) -> Pos {
    loop {
        let r = rng.gen_range(0..GRID);
        let c = rng.gen_range(0..GRID);
        let p = Pos { r, c };
        if !taken.contains(&p) {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_identical_across_envs() {
        let specs: Vec<EnvSpec> = ENV_NAMES
            .iter()
            .map(|n| make_env(n).unwrap().spec())
            .collect();
        assert!(specs.iter().all(|s| *s == EnvSpec::standard()));
    }

    #[test]
    fn unknown_env_is_an_error() {
        assert!(matches!(make_env("pong"), Err(EnvError::UnknownEnv(_))));
    }

    #[test]
    fn frame_stack_reset_fill_and_ordering() {
        let f0 = Tensor::full(vec![GRID, GRID, 1], 0.25);
        let f1 = Tensor::full(vec![GRID, GRID, 1], 0.75);
        let mut fs = FrameStack::new(f0.clone());
        let s = fs.stacked();
        assert_eq!(s.shape(), &[GRID, GRID, HISTORY_LEN]);
        assert!(s.iter().all(|&v| v == 0.25));

        fs.push(f1);
        let s = fs.stacked();
        // Channels 0..3 oldest->newest: (f0, f0, f0, f1).
        assert_eq!(s.data()[0], 0.25);
        assert_eq!(s.data()[2], 0.25);
        assert_eq!(s.data()[3], 0.75);
    }

    #[test]
    fn render_draws_later_entries_on_top() {
        let goal = Pos { r: 2, c: 3 };
        let frame = render(&[(goal, GOAL), (goal, AGENT)]);
        assert_eq!(frame.data()[2 * GRID + 3], AGENT);
    }

    #[test]
    fn palette_survives_f32_round_trip() {
        for v in [EMPTY, HAZARD, GOAL, AGENT] {
            assert_eq!(v as f32 as f64, v);
        }
    }
}
