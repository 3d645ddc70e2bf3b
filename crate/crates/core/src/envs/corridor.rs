//! CORRIDOR: the simple navigation task. A static goal (+1, terminal), one
//! static hazard (-1, terminal), agent start drawn from the reset seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    random_free_cell, render, Env, EnvError, Pos, StepResult, AGENT, GOAL, GRID, HAZARD,
    MAX_EPISODE_STEPS,
};
use crate::tensor::Tensor;

const GOAL_POS: Pos = Pos { r: 1, c: 8 };
const HAZARD_POS: Pos = Pos { r: 7, c: 2 };

#[derive(Debug)]
pub struct Corridor {
    agent: Pos,
    steps: u32,
    terminal: bool,
}

impl Corridor {
    pub fn new() -> Self {
        Self {
            agent: Pos { r: 0, c: 0 },
            steps: 0,
            terminal: true,
        }
    }

    fn frame(&self) -> Tensor {
        render(&[(GOAL_POS, GOAL), (HAZARD_POS, HAZARD), (self.agent, AGENT)])
    }
}

impl Default for Corridor {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for Corridor {
    fn name(&self) -> &'static str {
        "corridor"
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.agent = random_free_cell(&mut rng, &[GOAL_POS, HAZARD_POS]);
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

        let (mut reward, mut terminal) = if self.agent == GOAL_POS {
            (1.0, true)
        } else if self.agent == HAZARD_POS {
            (-1.0, true)
        } else {
            (0.0, false)
        };
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{DOWN, LEFT, NOOP, RIGHT, UP};

    /// Finds the agent (value 1.0) in a frame.
    fn agent_pos(frame: &Tensor) -> Pos {
        let idx = frame.iter().position(|&v| v == AGENT).expect("agent cell");
        Pos {
            r: idx / GRID,
            c: idx % GRID,
        }
    }

    #[test]
    fn same_seed_same_frame() {
        let mut a = Corridor::new();
        let mut b = Corridor::new();
        assert_eq!(a.reset(42).data(), b.reset(42).data());
        assert_ne!(a.reset(1).data(), b.reset(2).data());
    }

    #[test]
    fn moving_onto_goal_rewards_and_terminates() {
        let mut env = Corridor::new();
        // Find a seed whose start is left of the goal on the same row.
        let mut seed = 0;
        loop {
            let f = env.reset(seed);
            let p = agent_pos(&f);
            if p.r == GOAL_POS.r && p.c + 1 == GOAL_POS.c {
                break;
            }
            seed += 1;
        }
        let out = env.step(RIGHT).unwrap();
        assert_eq!(out.reward, 1.0);
        assert!(out.terminal);
        assert!(matches!(
            env.step(NOOP),
            Err(EnvError::StepAfterTerminal)
        ));
    }

    #[test]
    fn hazard_contact_is_negative_terminal() {
        let mut env = Corridor::new();
        let mut seed = 0;
        loop {
            let f = env.reset(seed);
            let p = agent_pos(&f);
            if p.r == HAZARD_POS.r + 1 && p.c == HAZARD_POS.c {
                break;
            }
            seed += 1;
        }
        let out = env.step(UP).unwrap();
        assert_eq!(out.reward, -1.0);
        assert!(out.terminal);
    }

    #[test]
    fn noop_and_wall_bumps_leave_position_unchanged() {
        let mut env = Corridor::new();
        let f = env.reset(3);
        let start = agent_pos(&f);
        let out = env.step(NOOP).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(agent_pos(&out.frame), start);

        // Drive into the left wall until pinned, then bump it.
        let mut env = Corridor::new();
        env.reset(3);
        let mut last = None;
        for _ in 0..GRID {
            last = Some(env.step(LEFT).unwrap());
            if last.as_ref().unwrap().terminal {
                return; // walked into goal/hazard; fine for this seed
            }
        }
        let pinned = agent_pos(&last.unwrap().frame);
        assert_eq!(pinned.c, 0);
        let out = env.step(LEFT).unwrap();
        assert_eq!(agent_pos(&out.frame), pinned);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn episode_caps_at_200_steps_with_zero_reward() {
        let mut env = Corridor::new();
        let mut pos = agent_pos(&env.reset(5));
        let mut steps = 0;
        // Steer to the bottom wall on a column holding neither goal nor
        // hazard, then idle until the cap fires.
        if pos.c == HAZARD_POS.c || pos.c == GOAL_POS.c {
            let out = env.step(RIGHT).unwrap();
            steps += 1;
            pos = agent_pos(&out.frame);
        }
        while pos.r < GRID - 1 {
            let out = env.step(DOWN).unwrap();
            steps += 1;
            assert!(!out.terminal, "hit something while steering");
            pos = agent_pos(&out.frame);
        }
        loop {
            let out = env.step(NOOP).unwrap();
            steps += 1;
            if out.terminal {
                assert_eq!(steps, MAX_EPISODE_STEPS);
                assert_eq!(out.reward, 0.0);
                break;
            }
            assert!(steps < MAX_EPISODE_STEPS, "cap missed");
        }
    }
}
