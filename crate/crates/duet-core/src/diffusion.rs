//! Noise schedule, forward process, epsilon-prediction loss, DDIM sampling
//! and classifier-free guidance over the latent token sequence.
//!
//! Timesteps are 1-based: `beta[t-1]` is the step-`t` noise rate and
//! `alpha_bar(t)` the running product of `1 - beta` up to `t`, with
//! `alpha_bar(0) = 1` by convention so the last DDIM step lands on the clean
//! prediction.

use candle_core::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DuetError, Result};
use crate::nn::scalar_f64;
use crate::rng::{normal_tensor, DuetRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    /// `beta_t` affine in `t`.
    Linear,
    /// `sqrt(beta_t)` affine in `t` (the convention matching the 0.00085,
    /// 0.012 endpoints).
    ScaledLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(kind: ScheduleKind, beta_start: f64, beta_end: f64, steps: usize) -> Result<Self> {
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(DuetError::InvalidScheduleParams(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} / {beta_end}"
            )));
        }
        if steps == 0 {
            return Err(DuetError::InvalidScheduleParams("zero steps".into()));
        }
        let interp = |i: usize| -> f64 {
            if steps == 1 {
                return beta_start;
            }
            let u = i as f64 / (steps - 1) as f64;
            match kind {
                ScheduleKind::Linear => beta_start + (beta_end - beta_start) * u,
                ScheduleKind::ScaledLinear => {
                    let s = beta_start.sqrt() + (beta_end.sqrt() - beta_start.sqrt()) * u;
                    s * s
                }
            }
        };
        let beta: Vec<f64> = (0..steps).map(interp).collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0f64;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(NoiseSchedule {
            kind,
            beta,
            alpha,
            alpha_bar,
        })
    }

    /// The convention used throughout the crate: T=1000 with the
    /// scaled-linear endpoints 0.00085 and 0.012.
    pub fn default_scaled_linear() -> Self {
        Self::build(ScheduleKind::ScaledLinear, 0.00085, 0.012, 1000).expect("valid constants")
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// Cumulative product at step `t` (1-based); `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        self.alpha_bar
            .get(t - 1)
            .copied()
            .ok_or(DuetError::TimestepOutOfRange {
                t,
                max: self.steps(),
            })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    pub schedule_kind: ScheduleKind,
    pub beta_start: f64,
    pub beta_end: f64,
    pub train_steps: usize,
    pub inference_steps: usize,
    /// Guidance strength; 0 reproduces the conditional model.
    pub cfg_scale: f64,
    /// Probability of dropping the text condition during training.
    pub uncond_ratio: f64,
    /// DDIM noise amount; 0 is fully deterministic.
    pub eta: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            schedule_kind: ScheduleKind::ScaledLinear,
            beta_start: 0.00085,
            beta_end: 0.012,
            train_steps: 1000,
            inference_steps: 50,
            cfg_scale: 3.5,
            uncond_ratio: 0.1,
            eta: 0.0,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inference_steps == 0 || self.inference_steps > self.train_steps {
            return Err(DuetError::InvalidConfig(format!(
                "inference_steps {} must be in [1, {}]",
                self.inference_steps, self.train_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.uncond_ratio) {
            return Err(DuetError::InvalidConfig(format!(
                "uncond_ratio {} outside [0, 1]",
                self.uncond_ratio
            )));
        }
        if self.eta < 0.0 {
            return Err(DuetError::InvalidConfig("eta must be >= 0".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(
            self.schedule_kind,
            self.beta_start,
            self.beta_end,
            self.train_steps,
        )
    }
}

/// Per-sample scalar broadcast helper: `[B]` values against `[B, ...]`.
fn per_sample(values: &[f64], like: &Tensor) -> Result<Tensor> {
    let b = like.dims()[0];
    if values.len() != b {
        return Err(DuetError::shape(format!("{b} values"), format!("{}", values.len())));
    }
    let mut shape = vec![b];
    shape.extend(std::iter::repeat(1).take(like.dims().len() - 1));
    Ok(Tensor::from_vec(values.to_vec(), shape, like.device())?.to_dtype(like.dtype())?)
}

/// Forward marginal: `z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps`.
pub fn q_sample(
    z0: &Tensor,
    t: &[usize],
    noise: &Tensor,
    schedule: &NoiseSchedule,
) -> Result<Tensor> {
    if z0.dims() != noise.dims() {
        return Err(DuetError::shape(
            format!("{:?}", z0.dims()),
            format!("{:?}", noise.dims()),
        ));
    }
    let mut s_signal = Vec::with_capacity(t.len());
    let mut s_noise = Vec::with_capacity(t.len());
    for &ti in t {
        if ti == 0 {
            return Err(DuetError::TimestepOutOfRange {
                t: 0,
                max: schedule.steps(),
            });
        }
        let ab = schedule.alpha_bar(ti)?;
        s_signal.push(ab.sqrt());
        s_noise.push((1.0 - ab).sqrt());
    }
    let signal = z0.broadcast_mul(&per_sample(&s_signal, z0)?)?;
    let noisy = noise.broadcast_mul(&per_sample(&s_noise, z0)?)?;
    Ok((signal + noisy)?)
}

/// Batched condition handed to an epsilon model: pre-computed text embeddings
/// plus a per-sample flag selecting the learned null embedding instead.
#[derive(Debug, Clone)]
pub struct CondBatch {
    pub text: Tensor,
    pub uncond: Vec<bool>,
}

impl CondBatch {
    pub fn all_uncond(&self) -> Self {
        CondBatch {
            text: self.text.clone(),
            uncond: vec![true; self.uncond.len()],
        }
    }

    pub fn all_cond(&self) -> Self {
        CondBatch {
            text: self.text.clone(),
            uncond: vec![false; self.uncond.len()],
        }
    }
}

/// Anything that predicts epsilon from `(z_t, t, condition)`.
pub trait EpsilonModel {
    fn predict(&self, z_t: &Tensor, t: &[usize], cond: &CondBatch) -> Result<Tensor>;
}

/// One training loss evaluation: draw `t` and `eps`, drop conditions with
/// probability `uncond_ratio`, return `|eps - eps_hat|^2` summed per sample
/// and averaged over the batch.
pub fn training_loss<M: EpsilonModel>(
    model: &M,
    z0: &Tensor,
    text: &Tensor,
    rng: &mut DuetRng,
    cfg: &DiffusionConfig,
    schedule: &NoiseSchedule,
) -> Result<(Tensor, f64)> {
    cfg.validate()?;
    let b = z0.dims()[0];
    let t: Vec<usize> = (0..b)
        .map(|_| rng.gen_range(1..=schedule.steps()))
        .collect();
    let uncond: Vec<bool> = (0..b).map(|_| rng.gen::<f64>() < cfg.uncond_ratio).collect();
    let noise = normal_tensor(rng, z0.shape().clone(), z0.dtype(), z0.device())?;
    let z_t = q_sample(z0, &t, &noise, schedule)?;
    let cond = CondBatch {
        text: text.clone(),
        uncond,
    };
    let eps_hat = model.predict(&z_t, &t, &cond)?;
    let diff = (eps_hat - noise)?.sqr()?;
    let loss = (diff.sum_all()? / b as f64)?;
    let value = scalar_f64(&loss)?;
    Ok((loss, value))
}

/// Eq.-style guidance: `(1 + w) eps_cond - w eps_uncond`.
pub fn cfg_combine(eps_cond: &Tensor, eps_uncond: &Tensor, w: f64) -> Result<Tensor> {
    if eps_cond.dims() != eps_uncond.dims() {
        return Err(DuetError::shape(
            format!("{:?}", eps_cond.dims()),
            format!("{:?}", eps_uncond.dims()),
        ));
    }
    Ok(((eps_cond * (1.0 + w))? - (eps_uncond * w)?)?)
}

/// One DDIM update from `t` to `t_prev`.
///
/// `z0_hat = (z_t - sqrt(1 - ab_t) eps) / sqrt(ab_t)`;
/// `z_prev = sqrt(ab_prev) z0_hat + sqrt(1 - ab_prev - sigma^2) eps + sigma n`
/// with `sigma = eta sqrt((1-ab_prev)/(1-ab_t)) sqrt(1 - ab_t/ab_prev)`.
pub fn ddim_step(
    z_t: &Tensor,
    eps: &Tensor,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    eta: f64,
    rng: Option<&mut DuetRng>,
) -> Result<Tensor> {
    if t_prev >= t {
        return Err(DuetError::InvalidTimestepOrder { t, t_prev });
    }
    let ab_t = schedule.alpha_bar(t)?;
    let ab_prev = schedule.alpha_bar(t_prev)?;
    let z0_hat = ((z_t - (eps * (1.0 - ab_t).sqrt())?)? / ab_t.sqrt())?;
    let sigma = if eta == 0.0 {
        0.0
    } else {
        eta * ((1.0 - ab_prev) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_prev).sqrt()
    };
    let dir_coeff = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let mut z_prev = ((z0_hat * ab_prev.sqrt())? + (eps * dir_coeff)?)?;
    if sigma > 0.0 {
        let rng = rng.ok_or_else(|| {
            DuetError::InvalidConfig("eta > 0 requires an rng for fresh noise".into())
        })?;
        let fresh = normal_tensor(rng, z_prev.shape().clone(), z_prev.dtype(), z_prev.device())?;
        z_prev = (z_prev + (fresh * sigma)?)?;
    }
    Ok(z_prev)
}

/// Uniformly strided descending sub-schedule of `[1, train_steps]`; the
/// caller steps pairwise and finishes at `t_prev = 0`.
pub fn sub_schedule(train_steps: usize, inference_steps: usize) -> Result<Vec<usize>> {
    if inference_steps == 0 || inference_steps > train_steps {
        return Err(DuetError::InvalidConfig(format!(
            "inference_steps {inference_steps} must be in [1, {train_steps}]"
        )));
    }
    let ts: Vec<usize> = (0..inference_steps)
        .map(|i| train_steps - i * train_steps / inference_steps)
        .collect();
    Ok(ts)
}

/// Full DDIM sampling loop with classifier-free guidance. Returns the final
/// latent tokens (still in the scaled space the denoiser was trained in).
pub fn sample<M: EpsilonModel>(
    model: &M,
    text: &Tensor,
    batch: usize,
    token_shape: (usize, usize),
    cfg: &DiffusionConfig,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Tensor> {
    cfg.validate()?;
    let mut rng = crate::rng::rng_for(seed, "ddim");
    let device = text.device();
    let dtype = text.dtype();
    let mut z = normal_tensor(
        &mut rng,
        (batch, token_shape.0, token_shape.1),
        dtype,
        device,
    )?;
    let cond = CondBatch {
        text: text.clone(),
        uncond: vec![false; batch],
    };
    let ts = sub_schedule(schedule.steps(), cfg.inference_steps)?;
    for (j, &t) in ts.iter().enumerate() {
        let t_prev = ts.get(j + 1).copied().unwrap_or(0);
        let t_batch = vec![t; batch];
        let eps_cond = model.predict(&z, &t_batch, &cond.all_cond())?;
        let eps = if cfg.cfg_scale == 0.0 {
            eps_cond
        } else {
            let eps_uncond = model.predict(&z, &t_batch, &cond.all_uncond())?;
            cfg_combine(&eps_cond, &eps_uncond, cfg.cfg_scale)?
        };
        z = ddim_step(&z, &eps, t, t_prev, schedule, cfg.eta, Some(&mut rng))?;
    }
    Ok(z)
}
