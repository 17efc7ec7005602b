//! Contact-aware contrastive shaping of the interaction latent.
//!
//! For a pair `(x_a, x_b)`: if the bodies touch (any-frame voxel overlap), a
//! positive is built by a small ground-plane translation of `x_b`
//! (`TruncNorm(0, sigma_c)` per axis, cut at 3 sigma); otherwise a looser
//! jitter (`sigma_u`) is allowed. The negative shifts `x_b` by a two-tailed
//! magnitude in `[1.5 sigma_u, 3 sigma_u]` with uniform direction. A triplet
//! margin loss on the interaction posterior means pushes the original closer
//! to the positive than to the negative.

use candle_core::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dhvae::model::Dhvae;
use crate::error::{DuetError, Result};
use crate::motion::norm::{znorm, NormStats};
use crate::motion::sequence::{InteractionPair, LayoutKind, MotionSequence};
use crate::motion::skeleton::SkeletonSpec;
use crate::nn::{scalar_f64, TrainCtx};
use crate::physics::body::BodyVolume;
use crate::physics::metrics::pair_capsules;
use crate::physics::voxel::VoxelGrid;
use crate::physics::PhysicsParams;
use crate::rng::DuetRng;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    /// Contact jitter scale, meters.
    pub sigma_c: f64,
    /// Non-contact jitter scale, meters.
    pub sigma_u: f64,
    /// Negative band, multiples of `sigma_u`.
    pub neg_low_mult: f64,
    pub neg_high_mult: f64,
    pub margin: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            sigma_c: 0.05,
            sigma_u: 0.30,
            neg_low_mult: 1.5,
            neg_high_mult: 3.0,
            margin: 1.0,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_c > 0.0 && self.sigma_c < self.sigma_u) {
            return Err(DuetError::InvalidConfig(format!(
                "need 0 < sigma_c < sigma_u, got {} / {}",
                self.sigma_c, self.sigma_u
            )));
        }
        if self.neg_low_mult >= self.neg_high_mult {
            return Err(DuetError::InvalidConfig(
                "neg_low_mult must be below neg_high_mult".into(),
            ));
        }
        if self.margin <= 0.0 {
            return Err(DuetError::InvalidConfig("margin must be positive".into()));
        }
        Ok(())
    }
}

/// Any-frame voxel overlap between the two bodies (undilated grids).
///
/// Frames whose capsule surfaces never meet cannot share a voxel center, so
/// they skip voxelization entirely.
pub fn is_contact(
    pair: &InteractionPair,
    skeleton: &SkeletonSpec,
    body: &BodyVolume,
    params: &PhysicsParams,
) -> Result<bool> {
    for (caps_a, caps_b) in pair_capsules(pair, skeleton, body)? {
        if crate::physics::metrics::min_surface_gap(&caps_a, &caps_b) > 0.0 {
            continue;
        }
        let grid_a = VoxelGrid::voxelize(&caps_a, params.resolution);
        let grid_b = VoxelGrid::voxelize(&caps_b, params.resolution);
        if grid_a.overlap(&grid_b)? > 0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Shift a sequence by `(dx, dz)` on the ground plane (y up). Positions move;
/// velocities, rotations and contact flags are untouched.
pub fn translate_ground(seq: &MotionSequence, delta: [f64; 2]) -> MotionSequence {
    let mut out = seq.clone();
    let dim = seq.dim();
    let (dx, dz) = (delta[0] as f32, delta[1] as f32);
    match seq.layout.kind {
        LayoutKind::PosVelRot6d => {
            let j = seq.layout.joints;
            for t in 0..seq.frames {
                let frame = &mut out.data[t * dim..(t + 1) * dim];
                for joint in 0..j {
                    frame[joint * 3] += dx;
                    frame[joint * 3 + 2] += dz;
                }
            }
        }
        LayoutKind::RotRows6d => {
            for t in 0..seq.frames {
                let frame = &mut out.data[t * dim..(t + 1) * dim];
                frame[0] += dx;
                frame[2] += dz;
            }
        }
    }
    out
}

fn trunc_normal(rng: &mut DuetRng, sigma: f64, cut_mult: f64) -> f64 {
    loop {
        let x: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        if x.abs() <= cut_mult * sigma {
            return x;
        }
    }
}

/// Positive jitter: per-coordinate `TruncNorm(0, sigma)` cut at 3 sigma,
/// sigma chosen by the contact flag.
pub fn sample_positive_delta(rng: &mut DuetRng, contact: bool, cfg: &ContrastiveConfig) -> [f64; 2] {
    let sigma = if contact { cfg.sigma_c } else { cfg.sigma_u };
    [trunc_normal(rng, sigma, 3.0), trunc_normal(rng, sigma, 3.0)]
}

/// Negative shift: uniform direction, magnitude from the positive half of
/// `N(0, sigma_u^2)` conditioned to the `[1.5, 3] sigma_u` band.
pub fn sample_negative_delta(rng: &mut DuetRng, cfg: &ContrastiveConfig) -> [f64; 2] {
    let lo = cfg.neg_low_mult * cfg.sigma_u;
    let hi = cfg.neg_high_mult * cfg.sigma_u;
    let mag = loop {
        let m = (rng.sample::<f64, _>(StandardNormal) * cfg.sigma_u).abs();
        if m >= lo && m <= hi {
            break m;
        }
    };
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    [mag * theta.cos(), mag * theta.sin()]
}

/// `max(0, d(z, z+) - d(z, z-) + m)` with Euclidean distance over flattened
/// latents. A tiny epsilon inside the square roots keeps the gradient finite
/// at coincident latents without moving the loss measurably.
pub fn triplet_loss(z: &Tensor, z_pos: &Tensor, z_neg: &Tensor, margin: f64) -> Result<Tensor> {
    let d_pos = distance(z, z_pos)?;
    let d_neg = distance(z, z_neg)?;
    let raw = ((d_pos - d_neg)? + margin)?;
    Ok(raw.relu()?)
}

fn distance(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok(((a - b)?.sqr()?.sum_all()? + 1e-12)?.sqrt()?)
}

/// Diagnostics from one contrastive step.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveDiagnostics {
    pub contact: bool,
    pub d_pos: f64,
    pub d_neg: f64,
    pub loss: f64,
}

/// Full per-pair procedure: contact check, perturbed pair construction,
/// three encoder passes (posterior means as `z_o`), triplet loss.
#[allow(clippy::too_many_arguments)]
pub fn contrastive_step(
    model: &Dhvae,
    pair: &InteractionPair,
    skeleton: &SkeletonSpec,
    body: &BodyVolume,
    physics: &PhysicsParams,
    stats: &NormStats,
    cfg: &ContrastiveConfig,
    rng: &mut DuetRng,
    ctx: &mut Option<&mut TrainCtx>,
) -> Result<(Tensor, ContrastiveDiagnostics)> {
    cfg.validate()?;
    let contact = is_contact(pair, skeleton, body, physics)?;
    let delta_pos = sample_positive_delta(rng, contact, cfg);
    let delta_neg = sample_negative_delta(rng, cfg);
    let x_b_pos = translate_ground(&pair.person_b, delta_pos);
    let x_b_neg = translate_ground(&pair.person_b, delta_neg);

    let to_tensor = |seq: &MotionSequence| -> Result<Tensor> {
        let normed = znorm(seq, stats)?;
        Ok(Tensor::from_vec(
            normed.data,
            (1, seq.frames, seq.dim()),
            &model.store.device,
        )?
        .to_dtype(model.store.dtype)?)
    };
    let x_a = to_tensor(&pair.person_a)?;
    let x_b = to_tensor(&pair.person_b)?;
    let x_b_pos = to_tensor(&x_b_pos)?;
    let x_b_neg = to_tensor(&x_b_neg)?;

    let (_, emb_a) = model.encode_individual(&x_a, &model.person_tokens(crate::dhvae::Person::A).clone(), ctx)?;
    let tokens_b = model.person_tokens(crate::dhvae::Person::B).clone();
    let (_, emb_b) = model.encode_individual(&x_b, &tokens_b, ctx)?;
    let (_, emb_b_pos) = model.encode_individual(&x_b_pos, &tokens_b, ctx)?;
    let (_, emb_b_neg) = model.encode_individual(&x_b_neg, &tokens_b, ctx)?;
    let z_o = model.cotransformer_fuse(&emb_a, &emb_b, ctx)?.mean;
    let z_o_pos = model.cotransformer_fuse(&emb_a, &emb_b_pos, ctx)?.mean;
    let z_o_neg = model.cotransformer_fuse(&emb_a, &emb_b_neg, ctx)?.mean;

    let d_pos = scalar_f64(&distance(&z_o, &z_o_pos)?)?;
    let d_neg = scalar_f64(&distance(&z_o, &z_o_neg)?)?;
    let loss = triplet_loss(&z_o, &z_o_pos, &z_o_neg, cfg.margin)?;
    let diag = ContrastiveDiagnostics {
        contact,
        d_pos,
        d_neg,
        loss: scalar_f64(&loss)?,
    };
    Ok((loss, diag))
}
