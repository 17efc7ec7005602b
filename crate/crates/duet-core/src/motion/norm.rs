//! Per-channel z-normalization.

use serde::{Deserialize, Serialize};

use crate::error::{DuetError, Result};
use crate::motion::sequence::MotionSequence;

/// Floor applied to fitted standard deviations so constant channels map to 0.
pub const STD_FLOOR: f32 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        NormStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fit per-channel moments over every frame of every sequence.
    pub fn fit<'a>(sequences: impl IntoIterator<Item = &'a MotionSequence>) -> Result<Self> {
        let mut dim = 0usize;
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        for seq in sequences {
            if dim == 0 {
                dim = seq.dim();
                sum = vec![0.0; dim];
                sum_sq = vec![0.0; dim];
            } else if seq.dim() != dim {
                return Err(DuetError::shape(format!("dim {dim}"), format!("{}", seq.dim())));
            }
            for t in 0..seq.frames {
                for (c, v) in seq.frame(t).iter().enumerate() {
                    let v = *v as f64;
                    sum[c] += v;
                    sum_sq[c] += v * v;
                }
            }
            count += seq.frames;
        }
        if count == 0 {
            return Err(DuetError::DegenerateStats("no frames to fit".into()));
        }
        let n = count as f64;
        let mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
        let std: Vec<f32> = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / n - (*m as f64) * (*m as f64)).max(0.0);
                (var.sqrt() as f32).max(STD_FLOOR)
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim || self.std.len() != dim {
            return Err(DuetError::shape(
                format!("stats of dim {dim}"),
                format!("mean {} / std {}", self.mean.len(), self.std.len()),
            ));
        }
        for (c, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            if !m.is_finite() || !s.is_finite() || *s <= 1e-8 {
                return Err(DuetError::DegenerateStats(format!(
                    "channel {c}: mean {m}, std {s}"
                )));
            }
        }
        Ok(())
    }
}

/// `(x - mean) / std` per channel.
pub fn znorm(seq: &MotionSequence, stats: &NormStats) -> Result<MotionSequence> {
    stats.validate(seq.dim())?;
    let dim = seq.dim();
    let mut data = Vec::with_capacity(seq.data.len());
    for (i, v) in seq.data.iter().enumerate() {
        let c = i % dim;
        data.push((v - stats.mean[c]) / stats.std[c]);
    }
    Ok(MotionSequence {
        layout: seq.layout,
        frames: seq.frames,
        data,
    })
}

/// Inverse of [`znorm`].
pub fn denorm(seq: &MotionSequence, stats: &NormStats) -> Result<MotionSequence> {
    stats.validate(seq.dim())?;
    let dim = seq.dim();
    let mut data = Vec::with_capacity(seq.data.len());
    for (i, v) in seq.data.iter().enumerate() {
        let c = i % dim;
        data.push(v * stats.std[c] + stats.mean[c]);
    }
    Ok(MotionSequence {
        layout: seq.layout,
        frames: seq.frames,
        data,
    })
}

/// Denormalize a raw channel buffer (used when decoding model output that has
/// not been wrapped in a `MotionSequence` yet).
pub fn denorm_buffer(data: &mut [f32], dim: usize, stats: &NormStats) {
    for (i, v) in data.iter_mut().enumerate() {
        let c = i % dim;
        *v = *v * stats.std[c] + stats.mean[c];
    }
}

/// Normalize a raw channel buffer in place.
pub fn znorm_buffer(data: &mut [f32], dim: usize, stats: &NormStats) {
    for (i, v) in data.iter_mut().enumerate() {
        let c = i % dim;
        *v = (*v - stats.mean[c]) / stats.std[c];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::sequence::MotionLayout;
    use crate::rng::{normal_vec, rng_from_seed};

    fn toy_layout() -> MotionLayout {
        MotionLayout::pos_vel_rot(2) // dim 16
    }

    #[test]
    fn identity_stats_are_identity() {
        let layout = toy_layout();
        let mut seq = MotionSequence::zeros(layout, 3);
        seq.data.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32);
        let out = znorm(&seq, &NormStats::identity(layout.dim())).unwrap();
        assert_eq!(out.data, seq.data);
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let layout = toy_layout();
        let mut seq = MotionSequence::zeros(layout, 5);
        for t in 0..5 {
            seq.frame_mut(t)[0] = 3.25;
        }
        let stats = NormStats::fit([&seq]).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        let out = znorm(&seq, &stats).unwrap();
        for t in 0..5 {
            assert_eq!(out.frame(t)[0], 0.0);
        }
    }

    #[test]
    fn fitted_corpus_has_zero_mean_unit_std() {
        let layout = toy_layout();
        let dim = layout.dim();
        let mut rng = rng_from_seed(11);
        let frames = 1000;
        let vals = normal_vec(&mut rng, frames * dim);
        let seq = MotionSequence {
            layout,
            frames,
            data: vals.iter().map(|v| (*v * 2.5 + 1.0) as f32).collect(),
        };
        let stats = NormStats::fit([&seq]).unwrap();
        let normed = znorm(&seq, &stats).unwrap();
        for c in 0..dim {
            let mut mean = 0.0f64;
            let mut var = 0.0f64;
            for t in 0..frames {
                mean += normed.frame(t)[c] as f64;
            }
            mean /= frames as f64;
            for t in 0..frames {
                let d = normed.frame(t)[c] as f64 - mean;
                var += d * d;
            }
            var /= frames as f64;
            assert!(mean.abs() < 1e-6, "channel {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "channel {c} var {var}");
        }
    }

    #[test]
    fn denorm_inverts_znorm() {
        let layout = toy_layout();
        let mut rng = rng_from_seed(3);
        let frames = 64;
        let data: Vec<f32> = normal_vec(&mut rng, frames * layout.dim())
            .iter()
            .map(|v| (*v * 4.0 - 2.0) as f32)
            .collect();
        let seq = MotionSequence {
            layout,
            frames,
            data,
        };
        let stats = NormStats::fit([&seq]).unwrap();
        let back = denorm(&znorm(&seq, &stats).unwrap(), &stats).unwrap();
        for (a, b) in seq.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn invalid_stats_rejected() {
        let layout = toy_layout();
        let seq = MotionSequence::zeros(layout, 1);
        let mut stats = NormStats::identity(layout.dim());
        stats.std[2] = 0.0;
        assert!(matches!(
            znorm(&seq, &stats),
            Err(DuetError::DegenerateStats(_))
        ));
    }
}
