//! The hierarchical two-person motion VAE.
//!
//! Encoding: a shared transformer encoder reads each person's frames with
//! that person's learnable tokens prepended; the token output slots carry the
//! posterior (mean, log-variance), the frame slots carry a temporal
//! embedding. A CoTransformer then cross-attends the two temporal embeddings
//! (each branch queries the other's stream, with additive skips), pools both
//! branches symmetrically, concatenates the global token and produces the
//! interaction posterior through an MLP whose output layer starts at zero.
//!
//! Decoding: the interaction latent is expanded by a transformer decoder into
//! an N-step memory; a shared person decoder turns positional queries plus
//! the person's own latent into motion frames by cross-attending to that
//! memory.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::dhvae::posterior::{reparameterize, GaussianPosterior, LatentTriple};
use crate::error::{DuetError, Result};
use crate::nn::{
    sinusoidal_pe, DecoderBlock, EncoderBlock, CrossBlock, Init, LayerNorm, Linear, ParamStore,
    TrainCtx,
};
use crate::rng::DuetRng;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DhvaeConfig {
    /// Channel count of the motion layout this model reads and writes.
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Latent tokens per component (`l`).
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

impl DhvaeConfig {
    /// Full-scale settings for the 262-channel layout.
    pub fn full_262() -> Self {
        DhvaeConfig {
            input_dim: 262,
            latent_dim: 256,
            latent_tokens: 1,
            hidden_dim: 1024,
            heads: 4,
            dropout: 0.1,
            enc_layers_individual: 4,
            cotransformer_layers: 3,
            max_frames: 300,
            kl_weight: 1e-3,
            joint_weight: 1.0,
            triplet_weight: 0.1,
        }
    }

    /// Full-scale settings for the 336-channel row layout.
    pub fn full_336() -> Self {
        DhvaeConfig {
            input_dim: 336,
            latent_dim: 336,
            hidden_dim: 1344,
            ..Self::full_262()
        }
    }

    /// Desk-scale settings used by the toy pipeline and tests.
    pub fn toy(input_dim: usize) -> Self {
        DhvaeConfig {
            input_dim,
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

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim % self.heads != 0 {
            return Err(DuetError::InvalidConfig(format!(
                "hidden_dim {} not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if self.latent_tokens == 0 {
            return Err(DuetError::InvalidConfig("latent_tokens must be >= 1".into()));
        }
        if self.kl_weight < 0.0 || self.joint_weight < 0.0 || self.triplet_weight < 0.0 {
            return Err(DuetError::InvalidConfig("loss weights must be >= 0".into()));
        }
        if self.enc_layers_individual == 0 || self.cotransformer_layers == 0 {
            return Err(DuetError::InvalidConfig("layer counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which person's learnable token set to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Person {
    A,
    B,
}

/// Everything a training step needs from one full pass.
pub struct DhvaeOutput {
    pub recon_a: Tensor,
    pub recon_b: Tensor,
    pub latents: LatentTriple,
}

pub struct Dhvae {
    pub cfg: DhvaeConfig,
    pub store: ParamStore,
    input_proj: Linear,
    frame_pe: Tensor,
    tokens_a: Tensor,
    tokens_b: Tensor,
    token_o: Tensor,
    enc_blocks: Vec<EncoderBlock>,
    enc_ln: LayerNorm,
    latent_proj: Linear,
    latent_logvar_proj: Linear,
    co_blocks: Vec<CrossBlock>,
    co_ln: LayerNorm,
    zo_lin1: Linear,
    zo_lin2: Linear,
    inter_in: Linear,
    inter_queries: Tensor,
    inter_blocks: Vec<DecoderBlock>,
    inter_ln: LayerNorm,
    person_in: Linear,
    person_queries: Tensor,
    person_blocks: Vec<DecoderBlock>,
    person_ln: LayerNorm,
    out_proj: Linear,
}

impl Dhvae {
    pub fn new(cfg: &DhvaeConfig, dtype: DType, device: &Device, rng: &mut DuetRng) -> Result<Self> {
        let store = ParamStore::new(dtype, device);
        Self::build(cfg, store, rng)
    }

    /// Rebuild from checkpoint tensors; every stored tensor must fit.
    pub fn from_store(cfg: &DhvaeConfig, store: ParamStore, rng: &mut DuetRng) -> Result<Self> {
        let model = Self::build(cfg, store, rng)?;
        model.store.assert_fully_consumed()?;
        Ok(model)
    }

    fn build(cfg: &DhvaeConfig, store: ParamStore, rng: &mut DuetRng) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden_dim;
        let l = cfg.latent_tokens;
        let init = Init::TruncNormal(0.02);
        let input_proj = Linear::new(&store, "enc.in_proj", cfg.input_dim, h, init, rng)?;
        let frame_pe = sinusoidal_pe(cfg.max_frames, h, store.dtype, &store.device)?;
        let tokens_a = store.param("tokens.a", &[2 * l, h], init, rng)?;
        let tokens_b = store.param("tokens.b", &[2 * l, h], init, rng)?;
        let token_o = store.param("tokens.o", &[l, h], init, rng)?;
        let enc_blocks = (0..cfg.enc_layers_individual)
            .map(|i| EncoderBlock::new(&store, &format!("enc.block{i}"), h, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let enc_ln = LayerNorm::new(&store, "enc.ln", h, rng)?;
        let latent_proj = Linear::new(&store, "enc.latent_proj", h, cfg.latent_dim, init, rng)?;
        // Individual posteriors start sharp (sigma ~ exp(-3)) so early
        // reconstruction gradients are not drowned by sampling noise; the
        // KL term then widens them as training proceeds.
        let latent_logvar_proj = Linear::with_bias_init(
            &store,
            "enc.latent_logvar_proj",
            h,
            cfg.latent_dim,
            init,
            Init::Constant(-6.0),
            rng,
        )?;
        let co_blocks = (0..cfg.cotransformer_layers)
            .map(|i| CrossBlock::new(&store, &format!("co.block{i}"), h, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let co_ln = LayerNorm::new(&store, "co.ln", h, rng)?;
        let zo_lin1 = Linear::new(&store, "co.zo_mlp.lin1", 2 * h, h, init, rng)?;
        // Zero output layer: the interaction posterior starts at the prior.
        let zo_lin2 = Linear::new(
            &store,
            "co.zo_mlp.lin2",
            h,
            2 * cfg.latent_dim,
            Init::Zeros,
            rng,
        )?;
        let inter_in = Linear::new(&store, "dec.inter_in", cfg.latent_dim, h, init, rng)?;
        let inter_queries = store.param("dec.inter_queries", &[cfg.max_frames, h], init, rng)?;
        // Decoders mirror the encoder settings: the interaction decoder uses
        // the CoTransformer depth, the person decoder the individual depth.
        let inter_blocks = (0..cfg.cotransformer_layers)
            .map(|i| DecoderBlock::new(&store, &format!("dec.inter.block{i}"), h, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let inter_ln = LayerNorm::new(&store, "dec.inter_ln", h, rng)?;
        let person_in = Linear::new(&store, "dec.person_in", cfg.latent_dim, h, init, rng)?;
        let person_queries = store.param("dec.person_queries", &[cfg.max_frames, h], init, rng)?;
        let person_blocks = (0..cfg.enc_layers_individual)
            .map(|i| DecoderBlock::new(&store, &format!("dec.person.block{i}"), h, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let person_ln = LayerNorm::new(&store, "dec.person_ln", h, rng)?;
        let out_proj = Linear::new(&store, "dec.out", h, cfg.input_dim, init, rng)?;
        Ok(Dhvae {
            cfg: cfg.clone(),
            store,
            input_proj,
            frame_pe,
            tokens_a,
            tokens_b,
            token_o,
            enc_blocks,
            enc_ln,
            latent_proj,
            latent_logvar_proj,
            co_blocks,
            co_ln,
            zo_lin1,
            zo_lin2,
            inter_in,
            inter_queries,
            inter_blocks,
            inter_ln,
            person_in,
            person_queries,
            person_blocks,
            person_ln,
            out_proj,
        })
    }

    pub fn person_tokens(&self, person: Person) -> &Tensor {
        match person {
            Person::A => &self.tokens_a,
            Person::B => &self.tokens_b,
        }
    }

    fn check_frames(&self, n: usize) -> Result<()> {
        if n > self.cfg.max_frames {
            return Err(DuetError::shape(
                format!("at most {} frames", self.cfg.max_frames),
                format!("{n}"),
            ));
        }
        Ok(())
    }

    /// Encode one person's normalized motion `[B, N, D]` with the given token
    /// set, yielding the posterior and the per-frame temporal embedding.
    pub fn encode_individual(
        &self,
        x: &Tensor,
        tokens: &Tensor,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<(GaussianPosterior, Tensor)> {
        let (b, n, d) = x.dims3()?;
        if d != self.cfg.input_dim {
            return Err(DuetError::shape(
                format!("input dim {}", self.cfg.input_dim),
                format!("{d}"),
            ));
        }
        self.check_frames(n)?;
        let l = self.cfg.latent_tokens;
        let h = self.cfg.hidden_dim;
        let frames = self
            .input_proj
            .forward(x)?
            .broadcast_add(&self.frame_pe.narrow(0, 0, n)?)?;
        let tok = tokens.unsqueeze(0)?.expand((b, 2 * l, h))?.contiguous()?;
        let mut seq = Tensor::cat(&[&tok, &frames], 1)?;
        for block in &self.enc_blocks {
            seq = block.forward(&seq, ctx)?;
        }
        let seq = self.enc_ln.forward(&seq)?;
        let token_out = seq.narrow(1, 0, 2 * l)?;
        let temporal = seq.narrow(1, 2 * l, n)?.contiguous()?;
        let mean = self.latent_proj.forward(&token_out.narrow(1, 0, l)?.contiguous()?)?;
        let log_var = self
            .latent_logvar_proj
            .forward(&token_out.narrow(1, l, l)?.contiguous()?)?;
        Ok((GaussianPosterior::new(mean, log_var)?, temporal))
    }

    /// Fuse the two temporal embeddings into the interaction posterior.
    ///
    /// Both branches share weights and update simultaneously from the
    /// previous layer's pair, so swapping the inputs swaps the branch
    /// outputs; the symmetric mean pooling then leaves the posterior
    /// invariant under a person swap.
    pub fn cotransformer_fuse(
        &self,
        emb_a: &Tensor,
        emb_b: &Tensor,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<GaussianPosterior> {
        if emb_a.dims() != emb_b.dims() {
            return Err(DuetError::shape(
                format!("{:?}", emb_a.dims()),
                format!("{:?}", emb_b.dims()),
            ));
        }
        let (b, _, h) = emb_a.dims3()?;
        let mut a = emb_a.clone();
        let mut bb = emb_b.clone();
        for block in &self.co_blocks {
            let next_a = block.forward(&a, &bb, ctx)?;
            let next_b = block.forward(&bb, &a, ctx)?;
            a = next_a;
            bb = next_b;
        }
        let a = self.co_ln.forward(&a)?;
        let bb = self.co_ln.forward(&bb)?;
        let pool = ((a.mean(1)? + bb.mean(1)?)? * 0.5)?; // [B, H]
        let l = self.cfg.latent_tokens;
        let pooled = pool.unsqueeze(1)?.expand((b, l, h))?.contiguous()?;
        let tok_o = self.token_o.unsqueeze(0)?.expand((b, l, h))?.contiguous()?;
        let joint = Tensor::cat(&[&pooled, &tok_o], candle_core::D::Minus1)?;
        let hidden = candle_nn::ops::silu(&self.zo_lin1.forward(&joint)?)?;
        let stats = self.zo_lin2.forward(&hidden)?;
        let mean = stats.narrow(candle_core::D::Minus1, 0, self.cfg.latent_dim)?;
        let log_var = stats.narrow(candle_core::D::Minus1, self.cfg.latent_dim, self.cfg.latent_dim)?;
        GaussianPosterior::new(mean.contiguous()?, log_var.contiguous()?)
    }

    /// Encode a normalized pair into the three posteriors.
    pub fn encode_pair(
        &self,
        x_a: &Tensor,
        x_b: &Tensor,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<(GaussianPosterior, GaussianPosterior, GaussianPosterior)> {
        let (post_a, emb_a) = self.encode_individual(x_a, &self.tokens_a.clone(), ctx)?;
        let (post_b, emb_b) = self.encode_individual(x_b, &self.tokens_b.clone(), ctx)?;
        let post_o = self.cotransformer_fuse(&emb_a, &emb_b, ctx)?;
        Ok((post_a, post_b, post_o))
    }

    /// Expand the interaction latent into an N-step memory sequence.
    fn interaction_memory(
        &self,
        z_o: &Tensor,
        frames: usize,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<Tensor> {
        let (b, _, _) = z_o.dims3()?;
        self.check_frames(frames)?;
        let h = self.cfg.hidden_dim;
        let memory_tokens = self.inter_in.forward(z_o)?;
        let mut seq = self
            .inter_queries
            .narrow(0, 0, frames)?
            .unsqueeze(0)?
            .expand((b, frames, h))?
            .contiguous()?;
        for block in &self.inter_blocks {
            seq = block.forward(&seq, &memory_tokens, ctx)?;
        }
        self.inter_ln.forward(&seq)
    }

    /// Decode one person from their latent and the shared memory.
    fn decode_person(
        &self,
        z_p: &Tensor,
        memory: &Tensor,
        frames: usize,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<Tensor> {
        let (b, l, _) = z_p.dims3()?;
        let h = self.cfg.hidden_dim;
        let z_tokens = self.person_in.forward(z_p)?;
        let queries = self
            .person_queries
            .narrow(0, 0, frames)?
            .unsqueeze(0)?
            .expand((b, frames, h))?
            .contiguous()?;
        let mut seq = Tensor::cat(&[&z_tokens, &queries], 1)?;
        for block in &self.person_blocks {
            seq = block.forward(&seq, memory, ctx)?;
        }
        let seq = self.person_ln.forward(&seq)?;
        let frames_out = seq.narrow(1, l, frames)?.contiguous()?;
        self.out_proj.forward(&frames_out)
    }

    /// Decode both persons from a latent triple.
    pub fn decode(
        &self,
        z_o: &Tensor,
        z_a: &Tensor,
        z_b: &Tensor,
        frames: usize,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<(Tensor, Tensor)> {
        for (name, z) in [("z_o", z_o), ("z_a", z_a), ("z_b", z_b)] {
            let (_, l, d) = z.dims3()?;
            if l != self.cfg.latent_tokens || d != self.cfg.latent_dim {
                return Err(DuetError::shape(
                    format!(
                        "{name} of shape [_, {}, {}]",
                        self.cfg.latent_tokens, self.cfg.latent_dim
                    ),
                    format!("[_, {l}, {d}]"),
                ));
            }
        }
        let memory = self.interaction_memory(z_o, frames, ctx)?;
        let recon_a = self.decode_person(z_a, &memory, frames, ctx)?;
        let recon_b = self.decode_person(z_b, &memory, frames, ctx)?;
        Ok((recon_a, recon_b))
    }

    /// Full training pass: encode, sample with `rng`, decode.
    pub fn forward(
        &self,
        x_a: &Tensor,
        x_b: &Tensor,
        rng: &mut DuetRng,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<DhvaeOutput> {
        let (_, n, _) = x_a.dims3()?;
        let (post_a, post_b, post_o) = self.encode_pair(x_a, x_b, ctx)?;
        let z_a = reparameterize(&post_a, rng)?;
        let z_b = reparameterize(&post_b, rng)?;
        let z_o = reparameterize(&post_o, rng)?;
        let (recon_a, recon_b) = self.decode(&z_o, &z_a, &z_b, n, ctx)?;
        Ok(DhvaeOutput {
            recon_a,
            recon_b,
            latents: LatentTriple {
                z_o,
                z_a,
                z_b,
                post_o,
                post_a,
                post_b,
            },
        })
    }

    /// Inference-mode encode returning posterior means (no sampling).
    pub fn encode_means(&self, x_a: &Tensor, x_b: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let mut none = None;
        let (post_a, post_b, post_o) = self.encode_pair(x_a, x_b, &mut none)?;
        Ok((post_o.mean, post_a.mean, post_b.mean))
    }
}
