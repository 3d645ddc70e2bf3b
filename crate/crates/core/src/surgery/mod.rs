//! Layer-transplant surgery: copy the first k depth positions of a trained
//! parent into a freshly initialized child, and audit the result.
//!
//! Depth positions cover both dueling streams symmetrically: 1-3 are the
//! conv layers, 4 is both streams' hidden noisy-dense, 5 is both streams'
//! output noisy-dense. Optimizer state and replay are never transplanted.

mod checkpoint;

pub use checkpoint::{now_unix, Checkpoint, CheckpointError, CheckpointMeta, FORMAT_VERSION, MAGIC};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::nn::{FreezeMask, Network, NnError};

#[derive(Debug, Error)]
pub enum SurgeryError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("k={k} exceeds network depth {depth}")]
    KTooLarge { k: usize, depth: usize },
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Whether transplanted layers stay immutable during child training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransplantMode {
    Freeze,
    Finetune,
}

impl TransplantMode {
    /// CLI flag spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            TransplantMode::Freeze => "freeze",
            TransplantMode::Finetune => "finetune",
        }
    }

    /// Spelling used inside trial identifiers ("child4-frozen-...").
    pub fn trial_str(self) -> &'static str {
        match self {
            TransplantMode::Freeze => "frozen",
            TransplantMode::Finetune => "finetuned",
        }
    }
}

impl FromStr for TransplantMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "freeze" | "frozen" => Ok(TransplantMode::Freeze),
            "finetune" | "finetuned" => Ok(TransplantMode::Finetune),
            other => Err(format!(
                "unknown mode {:?}; expected freeze or finetune",
                other
            )),
        }
    }
}

impl fmt::Display for TransplantMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How much of the parent to carry over, and what to do with it.
#[derive(Debug, Clone, Copy)]
pub struct TransplantSpec {
    /// Depth positions copied from the parent; the experiment grid uses
    /// {2, 4}, the library accepts 0..=depth.
    pub k: usize,
    pub mode: TransplantMode,
    /// Seeds the fresh initialization of the remaining positions.
    pub reinit_seed: u64,
}

/// Builds the child: positions 1..=k copied from the parent checkpoint,
/// positions k+1..=l freshly initialized from `reinit_seed`, plus the freeze
/// mask implied by the mode (the transplanted names, or empty for finetune).
pub fn transplant(
    parent: &Checkpoint,
    spec: &TransplantSpec,
) -> Result<(Network, FreezeMask), SurgeryError> {
    // Fresh child drawn exactly like a scratch network with this seed; the
    // transplanted prefix then overwrites the first k positions.
    let mut child = Network::new_default(
        parent.meta.n_actions,
        parent.meta.n_atoms,
        spec.reinit_seed,
    );
    if child.architecture_hash() != parent.meta.architecture_hash {
        return Err(SurgeryError::ArchitectureMismatch(format!(
            "parent {:#018x} vs default architecture {:#018x}",
            parent.meta.architecture_hash,
            child.architecture_hash()
        )));
    }
    let depth = child.depth();
    if spec.k > depth {
        return Err(SurgeryError::KTooLarge {
            k: spec.k,
            depth,
        });
    }
    for d in 1..=spec.k {
        let prefix = format!("layer{}/", d);
        for (name, tensor) in &parent.tensors {
            if name.starts_with(&prefix) {
                child.set_param(name, tensor.clone())?;
            }
        }
    }
    let mask = match spec.mode {
        TransplantMode::Freeze => FreezeMask::first_depths(spec.k),
        TransplantMode::Finetune => FreezeMask::empty(),
    };
    Ok((child, mask))
}

/// Per-depth bitwise comparison between two checkpoints.
#[derive(Debug, Clone)]
pub struct TransplantReport {
    pub k: usize,
    /// depth_equal[d-1] is true when every parameter at depth d matches.
    pub depth_equal: Vec<bool>,
    /// Passes iff depths 1..=k all equal and every deeper depth differs.
    pub pass: bool,
}

impl fmt::Display for TransplantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "transplant audit (k={})", self.k)?;
        for (i, eq) in self.depth_equal.iter().enumerate() {
            let d = i + 1;
            let expected = if d <= self.k { "copied" } else { "reinit" };
            writeln!(
                f,
                "  layer{}: {} ({})",
                d,
                if *eq { "equal" } else { "differs" },
                expected
            )?;
        }
        write!(f, "  verdict: {}", if self.pass { "pass" } else { "FAIL" })
    }
}

/// Audits that `child` carries exactly the first k positions of `parent`:
/// depths 1..=k bitwise equal (at f32 precision), and at least one parameter
/// differing in every deeper position.
pub fn verify_transplant(
    parent: &Checkpoint,
    child: &Checkpoint,
    k: usize,
) -> Result<TransplantReport, SurgeryError> {
    if parent.meta.architecture_hash != child.meta.architecture_hash {
        return Err(SurgeryError::ArchitectureMismatch(format!(
            "parent {:#018x} vs child {:#018x}",
            parent.meta.architecture_hash, child.meta.architecture_hash
        )));
    }
    if parent.tensors.len() != child.tensors.len()
        || parent.tensors.keys().any(|n| !child.tensors.contains_key(n))
    {
        return Err(SurgeryError::ArchitectureMismatch(
            "tensor name sets differ".into(),
        ));
    }
    let depth = depth_of(parent);
    if k > depth {
        return Err(SurgeryError::KTooLarge { k, depth });
    }
    let mut depth_equal = Vec::with_capacity(depth);
    for d in 1..=depth {
        let prefix = format!("layer{}/", d);
        let equal = parent
            .tensors
            .iter()
            .filter(|(name, _)| name.starts_with(&prefix))
            .all(|(name, t)| child.tensors[name].bitwise_eq_f32(t));
        depth_equal.push(equal);
    }
    let pass = depth_equal[..k].iter().all(|&e| e)
        && depth_equal[k..].iter().all(|&e| !e);
    Ok(TransplantReport {
        k,
        depth_equal,
        pass,
    })
}

/// Highest depth index present in the checkpoint's tensor names.
fn depth_of(ck: &Checkpoint) -> usize {
    ck.tensors
        .keys()
        .filter_map(|name| {
            name.strip_prefix("layer")
                .and_then(|rest| rest.split('/').next())
                .and_then(|d| d.parse::<usize>().ok())
        })
        .max()
        .unwrap_or(0)
}
