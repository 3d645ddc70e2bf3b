//! Folds single-step records into n-step transitions with discounted returns.

use std::collections::VecDeque;

use super::{ObsStack, Transition};

/// One raw environment step, before n-step folding.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub obs: ObsStack,
    pub action: usize,
    pub reward: f64,
    pub next_obs: ObsStack,
    pub terminal: bool,
}

/// Accumulates steps of one trajectory and emits n-step transitions.
///
/// While the episode runs, a transition is emitted once `n` steps have
/// accumulated: G = sum of gamma^i * r over the window, bootstrapping from the
/// window's final observation. At a terminal step every pending prefix is
/// flushed with a shortened horizon (`n_actual < n`) and `terminal = true`.
#[derive(Debug, Clone)]
pub struct NStepFolder {
    n: usize,
    gamma: f64,
    pending: VecDeque<StepRecord>,
}

impl NStepFolder {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1, "n-step horizon must be at least 1");
        Self {
            n,
            gamma,
            pending: VecDeque::with_capacity(n),
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Discards any partial window, e.g. when an episode is cut off by the
    /// step budget rather than ending in a terminal state.
    pub fn reset(&mut self) {
        self.pending.clear();
    }

    /// Feeds one step; returns every transition that becomes complete.
    pub fn push(&mut self, rec: StepRecord) -> Vec<Transition> {
        let terminal = rec.terminal;
        self.pending.push_back(rec);
        let mut out = Vec::new();
        if terminal {
            // Flush every suffix start with its shortened return.
            while let Some(first) = self.pending.pop_front() {
                let rest: Vec<&StepRecord> = self.pending.iter().collect();
                out.push(self.fold(first, &rest));
            }
        } else if self.pending.len() == self.n {
            let first = self.pending.pop_front().expect("non-empty window");
            let rest: Vec<&StepRecord> = self.pending.iter().collect();
            out.push(self.fold(first, &rest));
        }
        out
    }

    fn fold(&self, first: StepRecord, rest: &[&StepRecord]) -> Transition {
        let mut g = first.reward;
        let mut discount = 1.0;
        for rec in rest {
            discount *= self.gamma;
            g += discount * rec.reward;
        }
        let (next_obs, terminal) = match rest.last() {
            Some(last) => (last.next_obs.clone(), last.terminal),
            None => (first.next_obs.clone(), first.terminal),
        };
        Transition {
            obs: first.obs,
            action: first.action,
            return_g: g,
            next_obs,
            terminal,
            n_actual: (rest.len() + 1) as u32,
        }
    }
}
