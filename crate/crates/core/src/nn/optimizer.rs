//! Adam with bias correction, plus the freeze mask honored during updates.
//!
//! Frozen layers are skipped entirely: neither their parameters nor their
//! first/second moment estimates are touched, so a frozen layer stays
//! bitwise identical across any number of update steps.

use std::collections::BTreeSet;

use super::{GradientSet, Network, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Added outside the square root in the denominator.
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1.5e-4,
        }
    }
}

/// Per-parameter first and second moment estimates.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(net: &Network, cfg: AdamConfig) -> Self {
        let shapes: Vec<Vec<usize>> = net
            .layers()
            .flat_map(|l| {
                l.params
                    .tensors()
                    .into_iter()
                    .map(|(_, t)| t.shape().to_vec())
            })
            .collect();
        Self {
            cfg,
            step: 0,
            m: shapes.iter().cloned().map(Tensor::zeros).collect(),
            v: shapes.into_iter().map(Tensor::zeros).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Moment tensors for one flat parameter index, for inspection in tests.
    pub fn moments(&self, idx: usize) -> (&Tensor, &Tensor) {
        (&self.m[idx], &self.v[idx])
    }
}

/// Set of depth positions ("layer1".."layer{l}") excluded from updates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreezeMask {
    layers: BTreeSet<String>,
}

impl FreezeMask {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Freezes depth positions 1..=k.
    pub fn first_depths(k: usize) -> Self {
        let layers = (1..=k).map(|d| format!("layer{}", d)).collect();
        Self { layers }
    }

    pub fn from_names<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        Self {
            layers: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn contains(&self, depth_name: &str) -> bool {
        self.layers.contains(depth_name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }
}

/// One Adam step over every non-frozen layer.
///
/// `grads` must come from `GradientSet::zeros_like`/`backward` on the same
/// network. Unknown names in the mask are an error rather than a silent no-op.
pub fn apply_gradients(
    net: &mut Network,
    grads: &GradientSet,
    opt: &mut OptimizerState,
    mask: &FreezeMask,
) -> Result<(), NnError> {
    let depth = net.depth();
    let known: BTreeSet<String> = net.depth_names().into_iter().collect();
    for name in mask.names() {
        if !known.contains(name) {
            return Err(NnError::UnknownMaskLayer {
                name: name.to_string(),
                depth,
            });
        }
    }
    if grads.layers.len() != net.layer_count() {
        return Err(NnError::Mismatch {
            detail: format!(
                "gradient set has {} layers, network {}",
                grads.layers.len(),
                net.layer_count()
            ),
        });
    }

    opt.step += 1;
    let t = opt.step as i32;
    let c = opt.cfg;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);

    let mut flat = 0;
    for (layer, lg) in net.layers_mut().zip(grads.layers.iter()) {
        let frozen = mask.contains(&format!("layer{}", layer.depth));
        let tensors = layer.params.tensors_mut();
        if lg.tensors.len() != tensors.len() {
            return Err(NnError::Mismatch {
                detail: format!("layer {} gradient arity", layer.name),
            });
        }
        for ((_, p), g) in tensors.into_iter().zip(lg.tensors.iter()) {
            if frozen {
                flat += 1;
                continue;
            }
            let m = opt.m[flat].data_mut();
            let v = opt.v[flat].data_mut();
            let pd = p.data_mut();
            let gd = g.data();
            for i in 0..pd.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gd[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gd[i] * gd[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                pd[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
            flat += 1;
        }
    }
    Ok(())
}
