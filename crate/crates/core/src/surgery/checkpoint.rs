//! Checkpoint container and its binary file format.
//!
//! Layout: magic "RTL1"; u32 LE metadata length; UTF-8 key=value metadata
//! lines; then each tensor in sorted-name order as (u16 LE name length, name
//! bytes, u8 ndim, ndim x u32 LE dims, f32 LE payload); closed by an 8-byte
//! LE FNV-1a-64 checksum of every preceding byte. Files are written to a
//! temp path and renamed, and never modified afterwards.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::hash::Fnv1a64;
use crate::nn::Network;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"RTL1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}; not a checkpoint file")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} (supported: {})", FORMAT_VERSION)]
    UnsupportedVersion { found: u32 },
    #[error("file truncated while reading {context}")]
    Truncated { context: &'static str },
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("architecture hash mismatch: expected {expected:#018x}, found {found:#018x}")]
    ArchHashMismatch { expected: u64, found: u64 },
    #[error("malformed metadata: {0}")]
    MalformedMetadata(String),
    #[error("bad tensor record: {0}")]
    BadTensorRecord(String),
}

/// Provenance carried alongside the parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub env: String,
    pub train_steps: u64,
    pub seed: u64,
    pub n_actions: usize,
    pub n_atoms: usize,
    pub architecture_hash: u64,
    pub created_unix: u64,
    /// Free-form additional keys (sorted on write).
    pub extra: BTreeMap<String, String>,
}

/// In-memory checkpoint: metadata plus named parameter tensors. Tensor
/// values are always f32-exact (the serialized precision), so save→load is
/// the identity.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    /// Snapshots a network, rounding parameters to the serialized precision.
    pub fn from_network(net: &Network, meta: CheckpointMeta) -> Self {
        let mut meta = meta;
        meta.architecture_hash = net.architecture_hash();
        meta.n_actions = net.n_actions();
        meta.n_atoms = net.n_atoms();
        let tensors = net
            .named_params()
            .into_iter()
            .map(|(name, t)| {
                let mut t = t.clone();
                t.round_to_f32();
                (name, t)
            })
            .collect();
        Self { meta, tensors }
    }

    /// Rebuilds a default-architecture network carrying these parameters.
    pub fn to_network(&self) -> Result<Network, CheckpointError> {
        let mut net = Network::new_default(self.meta.n_actions, self.meta.n_atoms, 0);
        if net.architecture_hash() != self.meta.architecture_hash {
            return Err(CheckpointError::ArchHashMismatch {
                expected: self.meta.architecture_hash,
                found: net.architecture_hash(),
            });
        }
        let expected: Vec<String> = net.named_params().iter().map(|(n, _)| n.clone()).collect();
        if expected.len() != self.tensors.len()
            || expected.iter().any(|n| !self.tensors.contains_key(n))
        {
            return Err(CheckpointError::BadTensorRecord(
                "tensor names do not match the architecture".into(),
            ));
        }
        for (name, tensor) in &self.tensors {
            net.set_param(name, tensor.clone()).map_err(|e| {
                CheckpointError::BadTensorRecord(format!("{}: {}", name, e))
            })?;
        }
        Ok(net)
    }

    /// Fails unless the stored architecture hash equals `expected`.
    pub fn verify_arch(&self, expected: u64) -> Result<(), CheckpointError> {
        if self.meta.architecture_hash != expected {
            return Err(CheckpointError::ArchHashMismatch {
                expected,
                found: self.meta.architecture_hash,
            });
        }
        Ok(())
    }

    fn encode_meta(&self) -> String {
        let m = &self.meta;
        let mut s = String::new();
        s.push_str(&format!("version={}\n", FORMAT_VERSION));
        s.push_str(&format!("env={}\n", m.env));
        s.push_str(&format!("train_steps={}\n", m.train_steps));
        s.push_str(&format!("seed={}\n", m.seed));
        s.push_str(&format!("n_actions={}\n", m.n_actions));
        s.push_str(&format!("n_atoms={}\n", m.n_atoms));
        s.push_str(&format!("arch_hash={:016x}\n", m.architecture_hash));
        s.push_str(&format!("created_unix={}\n", m.created_unix));
        for (k, v) in &m.extra {
            s.push_str(&format!("{}={}\n", k, v));
        }
        s
    }

    /// Serializes to the byte layout described in the module docs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        let meta = self.encode_meta();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.shape().len() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.iter() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let checksum = {
            let mut h = Fnv1a64::new();
            h.update(&out);
            h.finish()
        };
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    /// Writes atomically: temp file in the target directory, then rename.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic {
                found: [magic[0], magic[1], magic[2], magic[3]],
            });
        }

        // Checksum covers everything before the trailing 8 bytes.
        if bytes.len() < 12 {
            return Err(CheckpointError::Truncated { context: "checksum" });
        }
        let body = &bytes[..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        let computed = {
            let mut h = Fnv1a64::new();
            h.update(body);
            h.finish()
        };
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { stored, computed });
        }

        let meta_len = u32::from_le_bytes(r.take(4, "metadata length")?.try_into().unwrap());
        let meta_bytes = r.take(meta_len as usize, "metadata")?;
        let meta_text = std::str::from_utf8(meta_bytes)
            .map_err(|e| CheckpointError::MalformedMetadata(e.to_string()))?;
        let meta = parse_meta(meta_text)?;

        let mut tensors = BTreeMap::new();
        while r.pos < body.len() {
            let name_len =
                u16::from_le_bytes(r.take(2, "tensor name length")?.try_into().unwrap());
            let name = std::str::from_utf8(r.take(name_len as usize, "tensor name")?)
                .map_err(|e| CheckpointError::BadTensorRecord(e.to_string()))?
                .to_string();
            let ndim = r.take(1, "tensor ndim")?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(
                    u32::from_le_bytes(r.take(4, "tensor dims")?.try_into().unwrap()) as usize,
                );
            }
            let count: usize = shape.iter().product();
            let payload = r.take(count * 4, "tensor payload")?;
            let data: Vec<f64> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            if tensors.insert(name.clone(), Tensor::new(shape, data)).is_some() {
                return Err(CheckpointError::BadTensorRecord(format!(
                    "duplicate tensor {}",
                    name
                )));
            }
        }
        Ok(Self { meta, tensors })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], CheckpointError> {
        // The trailing 8 bytes are the checksum, not record data.
        let limit = self.bytes.len().saturating_sub(8);
        if self.pos + n > limit {
            return Err(CheckpointError::Truncated { context });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

fn parse_meta(text: &str) -> Result<CheckpointMeta, CheckpointError> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CheckpointError::MalformedMetadata(format!("line without '=': {:?}", line))
        })?;
        map.insert(k.to_string(), v.to_string());
    }
    let mut get = |key: &str| -> Result<String, CheckpointError> {
        map.remove(key)
            .ok_or_else(|| CheckpointError::MalformedMetadata(format!("missing key {}", key)))
    };
    let version: u32 = get("version")?
        .parse()
        .map_err(|_| CheckpointError::MalformedMetadata("version not an integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }
    let env = get("env")?;
    let parse_u64 = |s: String, key: &str| -> Result<u64, CheckpointError> {
        s.parse().map_err(|_| {
            CheckpointError::MalformedMetadata(format!("{} not an integer", key))
        })
    };
    let train_steps = parse_u64(get("train_steps")?, "train_steps")?;
    let seed = parse_u64(get("seed")?, "seed")?;
    let n_actions = parse_u64(get("n_actions")?, "n_actions")? as usize;
    let n_atoms = parse_u64(get("n_atoms")?, "n_atoms")? as usize;
    let arch = u64::from_str_radix(&get("arch_hash")?, 16)
        .map_err(|_| CheckpointError::MalformedMetadata("arch_hash not hex".into()))?;
    let created_unix = parse_u64(get("created_unix")?, "created_unix")?;
    Ok(CheckpointMeta {
        env,
        train_steps,
        seed,
        n_actions,
        n_atoms,
        architecture_hash: arch,
        created_unix,
        extra: map,
    })
}

/// Seconds since the Unix epoch, for checkpoint provenance.
pub fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
