//! Categorical value distributions on a fixed atom support, and the
//! distributional Bellman projection.

use crate::tensor::Tensor;

use super::AgentError;

/// Evenly spaced atom values z_i = v_min + i * delta_z.
#[derive(Debug, Clone)]
pub struct AtomSupport {
    z: Vec<f64>,
    v_min: f64,
    v_max: f64,
    delta_z: f64,
}

impl AtomSupport {
    pub fn new(n_atoms: usize, v_min: f64, v_max: f64) -> Result<Self, AgentError> {
        if n_atoms < 2 {
            return Err(AgentError::InvalidConfig(format!(
                "need at least 2 atoms, got {}",
                n_atoms
            )));
        }
        if v_min >= v_max || !v_min.is_finite() || !v_max.is_finite() {
            return Err(AgentError::InvalidConfig(format!(
                "support bounds must satisfy v_min < v_max, got [{}, {}]",
                v_min, v_max
            )));
        }
        let delta_z = (v_max - v_min) / (n_atoms - 1) as f64;
        let mut z: Vec<f64> = (0..n_atoms).map(|i| v_min + i as f64 * delta_z).collect();
        // Pin the endpoints exactly despite accumulation error.
        z[0] = v_min;
        z[n_atoms - 1] = v_max;
        Ok(Self {
            z,
            v_min,
            v_max,
            delta_z,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.z.len()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.z
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn delta_z(&self) -> f64 {
        self.delta_z
    }
}

/// Row-stochastic action-conditioned distribution [n_actions x n_atoms].
#[derive(Debug, Clone)]
pub struct CategoricalDistribution {
    probs: Vec<f64>,
    n_actions: usize,
    n_atoms: usize,
}

impl CategoricalDistribution {
    /// Row-wise softmax of network logits [n_actions, n_atoms].
    pub fn from_logits(logits: &Tensor) -> Self {
        assert_eq!(logits.shape().len(), 2, "logits are [actions, atoms]");
        let n_actions = logits.shape()[0];
        let n_atoms = logits.shape()[1];
        let mut probs = vec![0.0; n_actions * n_atoms];
        for a in 0..n_actions {
            let row = &logits.data()[a * n_atoms..(a + 1) * n_atoms];
            let out = &mut probs[a * n_atoms..(a + 1) * n_atoms];
            softmax_into(row, out);
        }
        Self {
            probs,
            n_actions,
            n_atoms,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, action: usize) -> &[f64] {
        &self.probs[action * self.n_atoms..(action + 1) * self.n_atoms]
    }

    /// Expected values q[a] = sum_i probs[a][i] * z[i].
    pub fn q_values(&self, support: &AtomSupport) -> Vec<f64> {
        (0..self.n_actions)
            .map(|a| {
                self.row(a)
                    .iter()
                    .zip(support.atoms().iter())
                    .map(|(p, z)| p * z)
                    .sum()
            })
            .collect()
    }
}

/// Numerically stable softmax writing into `out`.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits.iter()) {
        let e = (l - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Stable log-softmax: logit - max - log(sum exp(logit - max)).
pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - max - lse).collect()
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Distributional Bellman projection: maps each atom through
/// Tz_j = clamp(reward + discount_n * z_j, v_min, v_max) and splits its mass
/// linearly between the two neighboring support atoms.
///
/// `discount_n` already folds the n-step discount and the terminal zero:
/// gamma^n_actual for non-terminal transitions, 0.0 for terminal ones.
pub fn categorical_project(
    next_row: &[f64],
    reward: f64,
    discount_n: f64,
    support: &AtomSupport,
) -> Vec<f64> {
    let n = support.n_atoms();
    debug_assert_eq!(next_row.len(), n);
    let mut out = vec![0.0; n];
    for (j, &p) in next_row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let tz = (reward + discount_n * support.atoms()[j]).clamp(support.v_min(), support.v_max());
        let b = ((tz - support.v_min()) / support.delta_z()).clamp(0.0, (n - 1) as f64);
        let lo = b.floor() as usize;
        let hi = b.ceil() as usize;
        if lo == hi {
            out[lo] += p;
        } else {
            out[lo] += p * (hi as f64 - b);
            out[hi] += p * (b - lo as f64);
        }
    }
    out
}
