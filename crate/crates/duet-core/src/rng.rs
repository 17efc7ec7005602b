//! Deterministic randomness.
//!
//! Every stochastic operation in this crate draws from an explicitly seeded
//! ChaCha stream so that datasets, training runs and samplers are bit
//! reproducible. Sub-streams are derived by hashing a purpose label into the
//! base seed, and per-clip generators use `seed ^ clip_index`.

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub type DuetRng = ChaCha12Rng;

/// Root generator for a run.
pub fn rng_from_seed(seed: u64) -> DuetRng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent sub-stream for a named purpose (init, noise, dropout, ...).
pub fn rng_for(seed: u64, purpose: &str) -> DuetRng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in purpose.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha12Rng::seed_from_u64(seed ^ h)
}

/// Splittable per-clip stream: `seed ^ clip_index`.
pub fn rng_for_clip(seed: u64, clip_index: u64) -> DuetRng {
    ChaCha12Rng::seed_from_u64(seed ^ clip_index)
}

pub fn normal_vec(rng: &mut DuetRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Standard-normal tensor of the given shape, in `dtype`, from `rng`.
pub fn normal_tensor<S: Into<candle_core::Shape>>(
    rng: &mut DuetRng,
    shape: S,
    dtype: DType,
    device: &Device,
) -> candle_core::Result<Tensor> {
    let shape = shape.into();
    let n = shape.elem_count();
    let data = normal_vec(rng, n);
    let t = Tensor::from_vec(data, shape, device)?;
    t.to_dtype(dtype)
}

/// Uniform `[0,1)` draw; convenience for condition dropout and the like.
pub fn uniform01(rng: &mut DuetRng) -> f64 {
    rng.gen::<f64>()
}
