//! Pluggable deterministic text embedding.
//!
//! The full-scale system would use a pretrained language encoder; here the
//! interface is a trait with a hashed bag-of-words implementation: tokens
//! hash into signed buckets and the result is L2-normalized. Deterministic,
//! dependency-free, and distinct enough across the template vocabulary to
//! carry the conditioning signal.

use crate::error::Result;

pub trait TextEncoder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>>;
}

#[derive(Debug, Clone)]
pub struct HashedTextEncoder {
    dim: usize,
    seed: u64,
}

impl HashedTextEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashedTextEncoder { dim, seed }
    }
}

impl Default for HashedTextEncoder {
    fn default() -> Self {
        HashedTextEncoder::new(64, 0x7e47)
    }
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl TextEncoder for HashedTextEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = vec![0.0f32; self.dim];
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()) {
            if token.is_empty() {
                continue;
            }
            let h = fnv1a(token.as_bytes(), self.seed);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        Ok(v)
    }
}
