//! FNV-1a hashing, used for checkpoint checksums, architecture digests and
//! per-trial seed derivation.

pub const FNV_OFFSET_BASIS: u64 = 0xcbf29ce484222325;
pub const FNV_PRIME: u64 = 0x100000001b3;

/// Incremental 64-bit FNV-1a hasher.
#[derive(Debug, Clone)]
pub struct Fnv1a64 {
    state: u64,
}

impl Fnv1a64 {
    pub fn new() -> Self {
        Self {
            state: FNV_OFFSET_BASIS,
        }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= b as u64;
            self.state = self.state.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.state
    }
}

impl Default for Fnv1a64 {
    fn default() -> Self {
        Self::new()
    }
}

/// One-shot FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a64::new();
    h.update(bytes);
    h.finish()
}

/// Derives a 64-bit seed from a base seed and a label, so every trial and
/// every per-trial rng stream gets a disjoint, reproducible seed.
pub fn derive_seed(base_seed: u64, label: &str) -> u64 {
    let mut h = Fnv1a64::new();
    h.update(&base_seed.to_le_bytes());
    h.update(label.as_bytes());
    h.finish()
}
