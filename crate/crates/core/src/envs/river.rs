//! RIVER: the hard task, a scrolling dodge game. Hazard rows with seeded gap
//! columns march down the grid; the agent holds the bottom three rows,
//! earning +0.05 per survived step and -1 (terminal) on contact.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    render, Env, EnvError, Pos, StepResult, AGENT, GRID, HAZARD, MAX_EPISODE_STEPS,
};
use crate::tensor::Tensor;

/// Rows the agent may occupy.
const BAND_TOP: usize = 7;
const BAND_BOTTOM: usize = 9;
/// Hazard rows advance one row every this many steps.
const SCROLL_PERIOD: u32 = 2;
/// A new hazard row spawns at the top every this many steps.
const SPAWN_PERIOD: u32 = 6;
/// Open columns per hazard row.
const GAPS_PER_ROW: usize = 3;

/// One hazard row in flight: its current row and per-column occupancy.
#[derive(Debug, Clone)]
struct HazardRow {
    row: usize,
    occupied: [bool; GRID],
}

#[derive(Debug)]
pub struct River {
    agent: Pos,
    rows: Vec<HazardRow>,
    rng: ChaCha8Rng,
    steps: u32,
    terminal: bool,
}

impl River {
    pub fn new() -> Self {
        Self {
            agent: Pos {
                r: BAND_BOTTOM,
                c: 0,
            },
            rows: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            terminal: true,
        }
    }

    fn spawn_row(&mut self) {
        let mut occupied = [true; GRID];
        let mut gaps = 0;
        while gaps < GAPS_PER_ROW {
            let c = self.rng.gen_range(0..GRID);
            if occupied[c] {
                occupied[c] = false;
                gaps += 1;
            }
        }
        self.rows.push(HazardRow { row: 0, occupied });
    }

    fn hazard_at(&self, pos: Pos) -> bool {
        self.rows
            .iter()
            .any(|hr| hr.row == pos.r && hr.occupied[pos.c])
    }

    fn frame(&self) -> Tensor {
        let mut cells = Vec::new();
        for hr in &self.rows {
            for (c, &occ) in hr.occupied.iter().enumerate() {
                if occ {
                    cells.push((Pos { r: hr.row, c }, HAZARD));
                }
            }
        }
        cells.push((self.agent, AGENT));
        render(&cells)
    }
}

impl Default for River {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for River {
    fn name(&self) -> &'static str {
        "river"
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.agent = Pos {
            r: self.rng.gen_range(BAND_TOP..=BAND_BOTTOM),
            c: self.rng.gen_range(0..GRID),
        };
        self.rows.clear();
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
        self.agent = self.agent.moved(action, BAND_TOP..=BAND_BOTTOM);

        if self.steps.is_multiple_of(SCROLL_PERIOD) {
            for hr in &mut self.rows {
                hr.row += 1;
            }
            self.rows.retain(|hr| hr.row < GRID);
        }
        if self.steps.is_multiple_of(SPAWN_PERIOD) {
            self.spawn_row();
        }

        let (mut reward, mut terminal) = if self.hazard_at(self.agent) {
            (-1.0, true)
        } else {
            (0.05, false)
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
