//! Run configuration: one TOML document covering every pipeline stage.
//!
//! Precedence is CLI flag > config file > built-in default. The built-in
//! default is the desk-scale profile: 256 synthetic clips of 32 frames on
//! the 8-joint position/velocity/rotation layout (94 channels), a 128-wide
//! VAE and a 13-layer denoiser (full-depth so the skip pairing is
//! exercised), with learning rates tuned up from the 1e-4 optimizer default
//! for the tiny models.

use serde::{Deserialize, Serialize};

use duet_core::contrastive::ContrastiveConfig;
use duet_core::denoiser::DenoiserConfig;
use duet_core::dhvae::DhvaeConfig;
use duet_core::diffusion::DiffusionConfig;
use duet_core::error::{DuetError, Result};
use duet_core::motion::sequence::{LayoutKind, MotionLayout};
use duet_core::motion::skeleton::SkeletonSpec;
use duet_core::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub count: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// "pos_vel_rot6d" or "rot_rows6d".
    pub layout: String,
    /// Optional path to a skeleton JSON; the built-in 8-joint body otherwise.
    pub skeleton_path: Option<String>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            count: 256,
            frames_min: 32,
            frames_max: 32,
            layout: "pos_vel_rot6d".into(),
            skeleton_path: None,
        }
    }
}

impl DatasetSection {
    pub fn skeleton(&self) -> Result<SkeletonSpec> {
        match &self.skeleton_path {
            Some(path) => {
                let json = std::fs::read_to_string(path)?;
                SkeletonSpec::from_json(&json)
            }
            None => Ok(SkeletonSpec::toy_eight_joint()),
        }
    }

    pub fn motion_layout(&self, skeleton: &SkeletonSpec) -> Result<MotionLayout> {
        let kind = match self.layout.as_str() {
            "pos_vel_rot6d" | "ih" => LayoutKind::PosVelRot6d,
            "rot_rows6d" | "ix" => LayoutKind::RotRows6d,
            other => {
                return Err(DuetError::InvalidConfig(format!(
                    "unknown layout '{other}'"
                )))
            }
        };
        Ok(MotionLayout {
            kind,
            joints: skeleton.joint_count(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeSection {
    pub latent_dim: usize,
    pub latent_tokens: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub enc_layers_individual: usize,
    pub cotransformer_layers: usize,
    pub max_frames: usize,
    pub kl_weight: f64,
    pub joint_weight: f64,
    pub triplet_weight: f64,
}

impl Default for VaeSection {
    fn default() -> Self {
        VaeSection {
            latent_dim: 64,
            latent_tokens: 1,
            hidden_dim: 128,
            heads: 4,
            dropout: 0.0,
            enc_layers_individual: 2,
            cotransformer_layers: 2,
            max_frames: 64,
            kl_weight: 1e-3,
            joint_weight: 1.0,
            triplet_weight: 0.1,
        }
    }
}

impl VaeSection {
    pub fn to_config(&self, input_dim: usize) -> DhvaeConfig {
        DhvaeConfig {
            input_dim,
            latent_dim: self.latent_dim,
            latent_tokens: self.latent_tokens,
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            dropout: self.dropout,
            enc_layers_individual: self.enc_layers_individual,
            cotransformer_layers: self.cotransformer_layers,
            max_frames: self.max_frames,
            kl_weight: self.kl_weight,
            joint_weight: self.joint_weight,
            triplet_weight: self.triplet_weight,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserSection {
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub text_dim: usize,
}

impl Default for DenoiserSection {
    fn default() -> Self {
        DenoiserSection {
            layers: 13,
            hidden_dim: 128,
            heads: 4,
            dropout: 0.0,
            text_dim: 64,
        }
    }
}

impl DenoiserSection {
    pub fn to_config(
        &self,
        latent_dim: usize,
        latent_tokens: usize,
        train_steps: usize,
    ) -> DenoiserConfig {
        DenoiserConfig {
            layers: self.layers,
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            dropout: self.dropout,
            latent_dim,
            latent_tokens,
            text_dim: self.text_dim,
            train_steps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub feature_dim: usize,
    pub feature_frames: usize,
    pub diversity_subset: usize,
    pub r_precision_pool: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            feature_dim: 32,
            feature_frames: 16,
            diversity_subset: 16,
            r_precision_pool: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub dataset: DatasetSection,
    pub dhvae: VaeSection,
    pub contrastive: ContrastiveConfig,
    pub diffusion: DiffusionConfig,
    pub denoiser: DenoiserSection,
    pub train_vae: TrainConfig,
    pub train_denoiser: TrainConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            output_dir: "runs".into(),
            dataset: DatasetSection::default(),
            dhvae: VaeSection::default(),
            contrastive: ContrastiveConfig::default(),
            diffusion: DiffusionConfig::default(),
            denoiser: DenoiserSection::default(),
            train_vae: TrainConfig {
                epochs: 48,
                batch_size: 32,
                learning_rate: 1e-3,
                weight_decay: 0.01,
                seed: 7,
            },
            train_denoiser: TrainConfig {
                epochs: 200,
                batch_size: 64,
                learning_rate: 1e-3,
                weight_decay: 0.01,
                seed: 7,
            },
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| DuetError::InvalidConfig(format!("config parse error: {e}")))?;
        Ok(cfg)
    }

    /// Propagate the master seed into stage seeds that were left at default.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
            self.train_vae.seed = s;
            self.train_denoiser.seed = s;
        }
        self
    }
}
