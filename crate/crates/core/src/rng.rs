//! Portable deterministic sampling.
//!
//! Splits and human-evaluation samples must be reproducible from a seed on any
//! platform and in any language, so this module pins both the generator and the
//! shuffle instead of relying on a library whose algorithms may change between
//! releases.
//!
//! * Generator: SplitMix64 (Steele, Lea & Flood), 64-bit state, golden-gamma
//!   increment `0x9E3779B97F4A7C15`.
//! * Bounded draw: rejection sampling. Draws below `(2^64 - n) mod n` are
//!   discarded, the rest reduced modulo `n`. Unbiased for every `n`.
//! * Shuffle: Fisher–Yates, iterating `i` from `len - 1` down to `1` and
//!   swapping element `i` with element `bounded(i + 1)`.

use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn bounded(&mut self, n: u64) -> u64 {
        assert!(n > 0, "bounded draw from an empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }
}

pub fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = SplitMix64::new(seed);
    for i in (1..items.len()).rev() {
        let j = rng.bounded(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Derives a seed from string parts: first eight bytes (big-endian) of
/// SHA-256 over the parts joined by NUL.
pub fn seed_from_parts(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0u8]);
        }
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(bytes)
}
