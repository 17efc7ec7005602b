//! Diagonal-Gaussian posteriors over latent tokens.

use candle_core::Tensor;

use crate::error::Result;
use crate::nn::scalar_f64;
use crate::rng::{normal_tensor, DuetRng};

/// Clamp bounds for log-variance; keeps every KL and gradient finite.
pub const LOG_VAR_MIN: f64 = -30.0;
pub const LOG_VAR_MAX: f64 = 20.0;

/// Posterior parameters for a block of latent tokens, shape `[B, l, d]`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: Tensor,
    pub log_variance: Tensor,
}

impl GaussianPosterior {
    /// Wraps raw network outputs, applying the log-variance clamp.
    pub fn new(mean: Tensor, log_variance: Tensor) -> Result<Self> {
        Ok(GaussianPosterior {
            mean,
            log_variance: log_variance.clamp(LOG_VAR_MIN, LOG_VAR_MAX)?,
        })
    }

    pub fn standard_like(&self) -> Result<Self> {
        Ok(GaussianPosterior {
            mean: self.mean.zeros_like()?,
            log_variance: self.log_variance.zeros_like()?,
        })
    }
}

/// `z = mean + exp(0.5 log_var) * eps`, with `eps` drawn from `rng`.
pub fn reparameterize(p: &GaussianPosterior, rng: &mut DuetRng) -> Result<Tensor> {
    let eps = normal_tensor(rng, p.mean.shape().clone(), p.mean.dtype(), p.mean.device())?;
    let std = ((&p.log_variance * 0.5)?).exp()?;
    Ok((&p.mean + (std * eps)?)?)
}

/// Analytic KL to the standard normal prior:
/// `0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)`, summed over token and
/// channel dims and averaged over the batch. Always nonnegative.
pub fn kl_diag_gaussian(p: &GaussianPosterior) -> Result<Tensor> {
    let var = p.log_variance.exp()?;
    let term = ((p.mean.sqr()? + var)? - 1.0)?.sub(&p.log_variance)?;
    let (b, _, _) = p.mean.dims3()?;
    let summed = (term.sum_all()? * (0.5 / b as f64))?;
    Ok(summed)
}

/// Scalar view of the batch-mean KL.
pub fn kl_scalar(p: &GaussianPosterior) -> Result<f64> {
    scalar_f64(&kl_diag_gaussian(p)?)
}

/// The three disentangled latents plus the posteriors they came from.
#[derive(Debug, Clone)]
pub struct LatentTriple {
    pub z_o: Tensor,
    pub z_a: Tensor,
    pub z_b: Tensor,
    pub post_o: GaussianPosterior,
    pub post_a: GaussianPosterior,
    pub post_b: GaussianPosterior,
}
