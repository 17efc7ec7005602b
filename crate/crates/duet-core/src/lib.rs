//! Two-person motion generation at desk scale: a hierarchical latent VAE
//! with contrastively shaped interaction latents, DDIM latent diffusion with
//! classifier-free guidance, and fidelity plus physical-plausibility metrics
//! over synthetic interaction data.

pub mod checkpoint;
pub mod container;
pub mod contrastive;
pub mod dataset;
pub mod denoiser;
pub mod dhvae;
pub mod diffusion;
pub mod error;
pub mod gen_metrics;
pub mod motion;
pub mod nn;
pub mod physics;
pub mod rng;
pub mod synth;
pub mod text;
pub mod train;

pub use error::{DuetError, Result};

// Geometry types in public signatures come from nalgebra.
pub use nalgebra;
