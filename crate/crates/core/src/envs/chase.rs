//! CHASE: the medium task, same genre as CORRIDOR. The goal relocates on a
//! seeded schedule every 20 steps and respawns when caught (+1, episode
//! continues); two static hazards end the episode at -1.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    random_free_cell, render, Env, EnvError, Pos, StepResult, AGENT, GOAL, GRID, HAZARD,
    MAX_EPISODE_STEPS,
};
use crate::tensor::Tensor;

const HAZARDS: [Pos; 2] = [Pos { r: 2, c: 2 }, Pos { r: 7, c: 7 }];
/// Steps between scheduled goal relocations.
const RELOCATE_PERIOD: u32 = 20;

#[derive(Debug)]
pub struct Chase {
    agent: Pos,
    goal: Pos,
    rng: ChaCha8Rng,
    steps: u32,
    terminal: bool,
}

impl Chase {
    pub fn new() -> Self {
        Self {
            agent: Pos { r: 0, c: 0 },
            goal: Pos { r: 0, c: 1 },
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            terminal: true,
        }
    }

    fn frame(&self) -> Tensor {
        render(&[
            (HAZARDS[0], HAZARD),
            (HAZARDS[1], HAZARD),
            (self.goal, GOAL),
            (self.agent, AGENT),
        ])
    }

    /// Draws the next scheduled goal cell, avoiding hazards and the agent.
    fn respawn_goal(&mut self) {
        let taken = [HAZARDS[0], HAZARDS[1], self.agent];
        self.goal = random_free_cell(&mut self.rng, &taken);
    }
}

impl Default for Chase {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for Chase {
    fn name(&self) -> &'static str {
        "chase"
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.agent = random_free_cell(&mut self.rng, &HAZARDS);
        self.respawn_goal();
        self.steps = 0;
        self.terminal = false;
        self.frame()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.terminal {
            return Err(EnvError::StepAfterTerminal);
        }
        if action >= super::N_ACTIONS {
            return Err(EnvError::InvalidAction(action));
        }
        self.steps += 1;
        self.agent = self.agent.moved(action, 0..=GRID - 1);

        let mut reward = 0.0;
        let mut terminal = false;
        if HAZARDS.contains(&self.agent) {
            reward = -1.0;
            terminal = true;
        } else if self.agent == self.goal {
            reward = 1.0;
            self.respawn_goal();
        }
        // Scheduled relocation, after any catch this step.
        if !terminal && self.steps.is_multiple_of(RELOCATE_PERIOD) {
            self.respawn_goal();
        }
        if !terminal && self.steps >= MAX_EPISODE_STEPS {
            reward = 0.0;
            terminal = true;
        }
        self.terminal = terminal;
        Ok(StepResult {
            frame: self.frame(),
            reward,
            terminal,
        })
    }
}
