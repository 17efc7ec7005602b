//! VAE training objectives.
//!
//! The reconstruction likelihood is Gaussian with unit variance on
//! z-normalized features, i.e. mean squared error. The evidence bound adds
//! the three analytic KL terms with a shared weight; the full objective adds
//! an L1 joint-position penalty (computed in meters, through an in-graph
//! denormalization and, for rotation-row layouts, differentiable forward
//! kinematics) and the contrastive triplet term.

use candle_core::{Tensor, D};

use crate::dhvae::model::DhvaeOutput;
use crate::dhvae::posterior::kl_diag_gaussian;
use crate::error::{DuetError, Result};
use crate::motion::norm::NormStats;
use crate::motion::sequence::{LayoutKind, MotionLayout};
use crate::motion::skeleton::SkeletonSpec;
use crate::nn::scalar_f64;

/// Scalar breakdown of the bound; `total` is read off the loss tensor itself
/// so tests can check it against the recomputed sum of terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub recon_a: f64,
    pub recon_b: f64,
    pub kl_a: f64,
    pub kl_b: f64,
    pub kl_o: f64,
    pub kl_weight: f64,
    pub total: f64,
}

impl ElboTerms {
    /// Weighted sum of the reported terms.
    pub fn recomputed_total(&self) -> f64 {
        self.recon_a + self.recon_b + self.kl_weight * (self.kl_a + self.kl_b + self.kl_o)
    }
}

fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok((a - b)?.sqr()?.mean_all()?)
}

/// Negative evidence bound for one batch: reconstruction MSE per person plus
/// the weighted KL of all three posteriors.
pub fn elbo_loss(
    x_a: &Tensor,
    x_b: &Tensor,
    out: &DhvaeOutput,
    kl_weight: f64,
) -> Result<(Tensor, ElboTerms)> {
    let recon_a = mse(&out.recon_a, x_a)?;
    let recon_b = mse(&out.recon_b, x_b)?;
    let kl_a = kl_diag_gaussian(&out.latents.post_a)?;
    let kl_b = kl_diag_gaussian(&out.latents.post_b)?;
    let kl_o = kl_diag_gaussian(&out.latents.post_o)?;
    let kl_sum = ((&kl_a + &kl_b)? + &kl_o)?;
    let total = ((&recon_a + &recon_b)? + (kl_sum * kl_weight)?)?;
    let terms = ElboTerms {
        recon_a: scalar_f64(&recon_a)?,
        recon_b: scalar_f64(&recon_b)?,
        kl_a: scalar_f64(&kl_a)?,
        kl_b: scalar_f64(&kl_b)?,
        kl_o: scalar_f64(&kl_o)?,
        kl_weight,
        total: scalar_f64(&total)?,
    };
    Ok((total, terms))
}

/// In-graph denormalization: `x * std + mean` with stats as constants.
pub fn denorm_tensor(x: &Tensor, stats: &NormStats) -> Result<Tensor> {
    let d = stats.mean.len();
    let mean = Tensor::from_vec(stats.mean.clone(), d, x.device())?.to_dtype(x.dtype())?;
    let std = Tensor::from_vec(stats.std.clone(), d, x.device())?.to_dtype(x.dtype())?;
    Ok(x.broadcast_mul(&std)?.broadcast_add(&mean)?)
}

/// Differentiable global joint positions `[B, N, J, 3]` from a denormalized
/// feature tensor.
pub fn joint_positions_tensor(
    x_denorm: &Tensor,
    layout: MotionLayout,
    skeleton: &SkeletonSpec,
) -> Result<Tensor> {
    let (b, n, d) = x_denorm.dims3()?;
    if d != layout.dim() {
        return Err(DuetError::shape(format!("dim {}", layout.dim()), format!("{d}")));
    }
    let j = layout.joints;
    match layout.kind {
        LayoutKind::PosVelRot6d => {
            Ok(x_denorm.narrow(2, 0, j * 3)?.reshape((b, n, j, 3))?)
        }
        LayoutKind::RotRows6d => {
            let root = x_denorm.narrow(2, 0, 3)?; // [B, N, 3]
            let rows = x_denorm.narrow(2, 6, j * 6)?.reshape((b, n, j, 6))?;
            let rot = gram_schmidt_tensor(&rows)?; // [B, N, J, 3, 3]
            fk_tensor(&root, &rot, skeleton)
        }
    }
}

/// Batched Gram-Schmidt decode of `[..., 6]` into rotation matrices
/// `[..., 3, 3]` (columns). Uses a small epsilon in the normalizations so the
/// loss stays differentiable even for degenerate network output.
pub fn gram_schmidt_tensor(rows: &Tensor) -> Result<Tensor> {
    let eps = 1e-8;
    let a1 = rows.narrow(D::Minus1, 0, 3)?;
    let a2 = rows.narrow(D::Minus1, 3, 3)?;
    let norm1 = (a1.sqr()?.sum_keepdim(D::Minus1)? + eps)?.sqrt()?;
    let b1 = a1.broadcast_div(&norm1)?;
    let dot = (&a2 * &b1)?.sum_keepdim(D::Minus1)?;
    let proj = (&a2 - b1.broadcast_mul(&dot)?)?;
    let norm2 = (proj.sqr()?.sum_keepdim(D::Minus1)? + eps)?.sqrt()?;
    let b2 = proj.broadcast_div(&norm2)?;
    let b3 = cross_tensor(&b1, &b2)?;
    // Columns b1, b2, b3: stack along a new last axis.
    Ok(Tensor::stack(&[&b1, &b2, &b3], D::Minus1)?)
}

fn component(v: &Tensor, i: usize) -> Result<Tensor> {
    Ok(v.narrow(D::Minus1, i, 1)?)
}

fn cross_tensor(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ax, ay, az) = (component(a, 0)?, component(a, 1)?, component(a, 2)?);
    let (bx, by, bz) = (component(b, 0)?, component(b, 1)?, component(b, 2)?);
    let cx = ((&ay * &bz)? - (&az * &by)?)?;
    let cy = ((&az * &bx)? - (&ax * &bz)?)?;
    let cz = ((&ax * &by)? - (&ay * &bx)?)?;
    Ok(Tensor::cat(&[&cx, &cy, &cz], D::Minus1)?)
}

/// Forward kinematics over rotation tensors: `root` `[B, N, 3]`, `rot`
/// `[B, N, J, 3, 3]` local, skeleton-ordered.
fn fk_tensor(root: &Tensor, rot: &Tensor, skeleton: &SkeletonSpec) -> Result<Tensor> {
    let (b, n, j, _, _) = rot.dims5()?;
    if j != skeleton.joint_count() {
        return Err(DuetError::shape(
            format!("{} joints", skeleton.joint_count()),
            format!("{j}"),
        ));
    }
    let mut global_rot: Vec<Tensor> = Vec::with_capacity(j);
    let mut positions: Vec<Tensor> = Vec::with_capacity(j);
    for joint in 0..j {
        let local = rot.narrow(2, joint, 1)?.reshape((b, n, 3, 3))?;
        let parent = skeleton.parent_index[joint];
        if parent < 0 {
            positions.push(root.clone());
            global_rot.push(local);
        } else {
            let p = parent as usize;
            let off = skeleton.rest_offset[joint];
            let off = Tensor::from_vec(vec![off[0], off[1], off[2]], (3, 1), root.device())?
                .to_dtype(root.dtype())?;
            let moved = global_rot[p]
                .broadcast_matmul(&off)?
                .reshape((b, n, 3))?;
            positions.push((&positions[p] + moved)?);
            global_rot.push(global_rot[p].matmul(&local)?);
        }
    }
    Ok(Tensor::stack(&positions, 2)?)
}

/// L1 joint-position penalty in meters between normalized reconstruction and
/// normalized input.
pub fn joint_position_loss(
    recon_norm: &Tensor,
    x_norm: &Tensor,
    stats: &NormStats,
    layout: MotionLayout,
    skeleton: &SkeletonSpec,
) -> Result<Tensor> {
    let p_recon = joint_positions_tensor(&denorm_tensor(recon_norm, stats)?, layout, skeleton)?;
    let p_ref = joint_positions_tensor(&denorm_tensor(x_norm, stats)?, layout, skeleton)?;
    Ok((p_recon - p_ref)?.abs()?.mean_all()?)
}

/// Scalar breakdown of the full objective.
#[derive(Debug, Clone, Copy)]
pub struct TotalLossTerms {
    pub elbo: ElboTerms,
    pub joint: f64,
    pub triplet: f64,
    pub joint_weight: f64,
    pub triplet_weight: f64,
    pub total: f64,
}

impl TotalLossTerms {
    pub fn recomputed_total(&self) -> f64 {
        self.elbo.total + self.joint_weight * self.joint + self.triplet_weight * self.triplet
    }
}

/// `elbo + lambda_joint * L_joint + lambda_triplet * L_triplet`.
pub fn total_loss(
    elbo: (Tensor, ElboTerms),
    joint: Option<Tensor>,
    triplet: Option<Tensor>,
    joint_weight: f64,
    triplet_weight: f64,
) -> Result<(Tensor, TotalLossTerms)> {
    let (elbo_tensor, elbo_terms) = elbo;
    let mut loss = elbo_tensor;
    let joint_val = match &joint {
        Some(t) => scalar_f64(t)?,
        None => 0.0,
    };
    let triplet_val = match &triplet {
        Some(t) => scalar_f64(t)?,
        None => 0.0,
    };
    if let Some(t) = joint {
        loss = (loss + (t * joint_weight)?)?;
    }
    if let Some(t) = triplet {
        loss = (loss + (t * triplet_weight)?)?;
    }
    let terms = TotalLossTerms {
        elbo: elbo_terms,
        joint: joint_val,
        triplet: triplet_val,
        joint_weight,
        triplet_weight,
        total: scalar_f64(&loss)?,
    };
    Ok((loss, terms))
}
