//! Disentangled hierarchical VAE: model, posteriors and objectives.

pub mod loss;
pub mod model;
pub mod posterior;

pub use loss::{elbo_loss, joint_position_loss, total_loss, ElboTerms, TotalLossTerms};
pub use model::{Dhvae, DhvaeConfig, DhvaeOutput, Person};
pub use posterior::{
    kl_diag_gaussian, kl_scalar, reparameterize, GaussianPosterior, LatentTriple,
};
