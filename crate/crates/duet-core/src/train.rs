//! Two-stage training: the motion VAE (with the contrastive term), then the
//! latent denoiser against the frozen VAE.

use candle_core::{DType, Device, Tensor};
use candle_nn::Optimizer;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::contrastive::{
    is_contact, sample_negative_delta, sample_positive_delta, translate_ground, ContrastiveConfig,
};
use crate::dataset::Dataset;
use crate::denoiser::{Denoiser, DenoiserConfig, TokenScale};
use crate::dhvae::loss::{elbo_loss, joint_position_loss, total_loss, TotalLossTerms};
use crate::dhvae::model::{Dhvae, DhvaeConfig, DhvaeOutput};
use crate::dhvae::posterior::reparameterize;
use crate::diffusion::{training_loss, DiffusionConfig, NoiseSchedule};
use crate::error::{DuetError, Result};
use crate::motion::norm::{znorm, NormStats};
use crate::motion::sequence::MotionSequence;
use crate::nn::{scalar_f64, TrainCtx};
use crate::physics::{BodyVolume, PhysicsParams};
use crate::rng::{rng_for, DuetRng};
use crate::text::TextEncoder;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VaeEpochLog {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub joint: f64,
    pub triplet: f64,
    pub mean_d_pos: f64,
    pub mean_d_neg: f64,
}

pub struct TrainedVae {
    pub model: Dhvae,
    pub stats: NormStats,
    pub history: Vec<VaeEpochLog>,
}

/// Clips bucketed by frame count, pre-normalized into tensors.
struct ClipCache {
    groups: Vec<Vec<usize>>,
    x_a: Vec<Tensor>,
    x_b: Vec<Tensor>,
}

fn seq_tensor(seq: &MotionSequence, stats: &NormStats, device: &Device) -> Result<Tensor> {
    let normed = znorm(seq, stats)?;
    Ok(Tensor::from_vec(
        normed.data,
        (seq.frames, seq.dim()),
        device,
    )?)
}

fn build_cache(dataset: &Dataset, stats: &NormStats, device: &Device) -> Result<ClipCache> {
    let mut by_frames: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut x_a = Vec::with_capacity(dataset.pairs.len());
    let mut x_b = Vec::with_capacity(dataset.pairs.len());
    for (i, pair) in dataset.pairs.iter().enumerate() {
        by_frames.entry(pair.frames()).or_default().push(i);
        x_a.push(seq_tensor(&pair.person_a, stats, device)?);
        x_b.push(seq_tensor(&pair.person_b, stats, device)?);
    }
    Ok(ClipCache {
        groups: by_frames.into_values().collect(),
        x_a,
        x_b,
    })
}

fn batches(groups: &[Vec<usize>], batch_size: usize, rng: &mut DuetRng) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for group in groups {
        let mut idx = group.clone();
        idx.shuffle(rng);
        for chunk in idx.chunks(batch_size) {
            out.push(chunk.to_vec());
        }
    }
    out.shuffle(rng);
    out
}

fn check_finite(value: f64, step: usize, detail: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(DuetError::NonFiniteLoss {
            step,
            detail: detail.to_string(),
        });
    }
    Ok(())
}

/// Per-sample Euclidean distances over flattened latents, `[B]`.
fn batched_distance(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d2 = (a - b)?.sqr()?;
    let dims: Vec<usize> = (1..d2.dims().len()).collect();
    let mut summed = d2;
    for dim in dims.into_iter().rev() {
        summed = summed.sum(dim)?;
    }
    Ok((summed + 1e-12)?.sqrt()?)
}

/// Train the VAE on a dataset. The contrastive term follows the per-pair
/// procedure with contact flags precomputed once from the voxel oracle.
pub fn train_vae(
    dataset: &Dataset,
    cfg: &DhvaeConfig,
    contrastive: &ContrastiveConfig,
    train: &TrainConfig,
    device: &Device,
) -> Result<TrainedVae> {
    if dataset.pairs.is_empty() {
        return Err(DuetError::InsufficientSamples { needed: 1, got: 0 });
    }
    if cfg.input_dim != dataset.layout.dim() {
        return Err(DuetError::LayoutMismatch(format!(
            "model expects {} channels, dataset has {}",
            cfg.input_dim,
            dataset.layout.dim()
        )));
    }
    contrastive.validate()?;
    let stats = NormStats::fit(
        dataset
            .pairs
            .iter()
            .flat_map(|p| [&p.person_a, &p.person_b]),
    )?;
    let cache = build_cache(dataset, &stats, device)?;

    let use_triplet = cfg.triplet_weight > 0.0;
    let body = BodyVolume::from_skeleton(&dataset.skeleton)?;
    let physics = PhysicsParams::default();
    let contacts: Vec<bool> = if use_triplet {
        dataset
            .pairs
            .iter()
            .map(|p| is_contact(p, &dataset.skeleton, &body, &physics))
            .collect::<Result<_>>()?
    } else {
        vec![false; dataset.pairs.len()]
    };

    let mut init_rng = rng_for(train.seed, "vae-init");
    let model = Dhvae::new(cfg, DType::F32, device, &mut init_rng)?;
    let mut opt = candle_nn::AdamW::new(
        model.store.all_vars(),
        candle_nn::ParamsAdamW {
            lr: train.learning_rate,
            weight_decay: train.weight_decay,
            ..Default::default()
        },
    )?;

    let mut rng = rng_for(train.seed, "vae-train");
    let mut history = Vec::with_capacity(train.epochs);
    let mut step = 0usize;
    for epoch in 0..train.epochs {
        let mut acc = VaeEpochLog {
            epoch,
            total: 0.0,
            recon: 0.0,
            kl: 0.0,
            joint: 0.0,
            triplet: 0.0,
            mean_d_pos: 0.0,
            mean_d_neg: 0.0,
        };
        let mut n_batches = 0usize;
        for batch in batches(&cache.groups, train.batch_size, &mut rng) {
            let x_a = Tensor::stack(
                &batch.iter().map(|i| cache.x_a[*i].clone()).collect::<Vec<_>>(),
                0,
            )?;
            let x_b = Tensor::stack(
                &batch.iter().map(|i| cache.x_b[*i].clone()).collect::<Vec<_>>(),
                0,
            )?;
            let frames = x_a.dims3()?.1;

            let mut drop_rng = rng_for(train.seed ^ step as u64, "dropout");
            let mut ctx_holder = TrainCtx {
                rng: &mut drop_rng,
                dropout: cfg.dropout,
            };
            let mut ctx: Option<&mut TrainCtx> = Some(&mut ctx_holder);

            let (post_a, emb_a) =
                model.encode_individual(&x_a, &model.person_tokens(crate::dhvae::Person::A).clone(), &mut ctx)?;
            let (post_b, emb_b) =
                model.encode_individual(&x_b, &model.person_tokens(crate::dhvae::Person::B).clone(), &mut ctx)?;
            let post_o = model.cotransformer_fuse(&emb_a, &emb_b, &mut ctx)?;
            let z_a = reparameterize(&post_a, &mut rng)?;
            let z_b = reparameterize(&post_b, &mut rng)?;
            let z_o = reparameterize(&post_o, &mut rng)?;
            let (recon_a, recon_b) = model.decode(&z_o, &z_a, &z_b, frames, &mut ctx)?;
            let out = DhvaeOutput {
                recon_a,
                recon_b,
                latents: crate::dhvae::posterior::LatentTriple {
                    z_o,
                    z_a,
                    z_b,
                    post_o: post_o.clone(),
                    post_a,
                    post_b,
                },
            };

            let elbo = elbo_loss(&x_a, &x_b, &out, cfg.kl_weight)?;
            let joint = if cfg.joint_weight > 0.0 {
                let ja = joint_position_loss(
                    &out.recon_a,
                    &x_a,
                    &stats,
                    dataset.layout,
                    &dataset.skeleton,
                )?;
                let jb = joint_position_loss(
                    &out.recon_b,
                    &x_b,
                    &stats,
                    dataset.layout,
                    &dataset.skeleton,
                )?;
                Some(((ja + jb)? * 0.5)?)
            } else {
                None
            };

            let triplet = if use_triplet {
                let mut pos_rows = Vec::with_capacity(batch.len());
                let mut neg_rows = Vec::with_capacity(batch.len());
                for &i in &batch {
                    let dp = sample_positive_delta(&mut rng, contacts[i], contrastive);
                    let dn = sample_negative_delta(&mut rng, contrastive);
                    pos_rows.push(seq_tensor(
                        &translate_ground(&dataset.pairs[i].person_b, dp),
                        &stats,
                        device,
                    )?);
                    neg_rows.push(seq_tensor(
                        &translate_ground(&dataset.pairs[i].person_b, dn),
                        &stats,
                        device,
                    )?);
                }
                let x_b_pos = Tensor::stack(&pos_rows, 0)?;
                let x_b_neg = Tensor::stack(&neg_rows, 0)?;
                let tokens_b = model.person_tokens(crate::dhvae::Person::B).clone();
                let (_, emb_b_pos) = model.encode_individual(&x_b_pos, &tokens_b, &mut ctx)?;
                let (_, emb_b_neg) = model.encode_individual(&x_b_neg, &tokens_b, &mut ctx)?;
                let zo_pos = model.cotransformer_fuse(&emb_a, &emb_b_pos, &mut ctx)?.mean;
                let zo_neg = model.cotransformer_fuse(&emb_a, &emb_b_neg, &mut ctx)?.mean;
                let d_pos = batched_distance(&post_o.mean, &zo_pos)?;
                let d_neg = batched_distance(&post_o.mean, &zo_neg)?;
                acc.mean_d_pos += scalar_f64(&d_pos.mean_all()?)?;
                acc.mean_d_neg += scalar_f64(&d_neg.mean_all()?)?;
                let loss = ((d_pos - d_neg)? + contrastive.margin)?.relu()?.mean_all()?;
                Some(loss)
            } else {
                None
            };

            let (loss, terms): (Tensor, TotalLossTerms) =
                total_loss(elbo, joint, triplet, cfg.joint_weight, cfg.triplet_weight)?;
            check_finite(
                terms.total,
                step,
                &format!(
                    "vae loss diverged: recon_a={} recon_b={} kl=({}, {}, {}) joint={} triplet={}",
                    terms.elbo.recon_a,
                    terms.elbo.recon_b,
                    terms.elbo.kl_a,
                    terms.elbo.kl_b,
                    terms.elbo.kl_o,
                    terms.joint,
                    terms.triplet
                ),
            )?;
            opt.backward_step(&loss)?;

            acc.total += terms.total;
            acc.recon += terms.elbo.recon_a + terms.elbo.recon_b;
            acc.kl += terms.elbo.kl_a + terms.elbo.kl_b + terms.elbo.kl_o;
            acc.joint += terms.joint;
            acc.triplet += terms.triplet;
            n_batches += 1;
            step += 1;
        }
        let k = n_batches.max(1) as f64;
        acc.total /= k;
        acc.recon /= k;
        acc.kl /= k;
        acc.joint /= k;
        acc.triplet /= k;
        acc.mean_d_pos /= k;
        acc.mean_d_neg /= k;
        history.push(acc);
    }
    Ok(TrainedVae {
        model,
        stats,
        history,
    })
}

/// Latent token cache for diffusion training: per clip the `[3l, d]`
/// posterior means (unscaled) plus the text embedding.
pub struct LatentCache {
    pub tokens: Tensor,
    pub text: Tensor,
    pub token_scale: TokenScale,
}

/// Encode every clip once through the frozen VAE and compute the token
/// scale as std(individual latents) / std(global latents).
pub fn encode_latents(
    dataset: &Dataset,
    vae: &Dhvae,
    stats: &NormStats,
    text_encoder: &dyn TextEncoder,
    device: &Device,
) -> Result<LatentCache> {
    let mut tokens = Vec::with_capacity(dataset.pairs.len());
    let mut texts = Vec::with_capacity(dataset.pairs.len());
    for pair in &dataset.pairs {
        let x_a = seq_tensor(&pair.person_a, stats, device)?.unsqueeze(0)?;
        let x_b = seq_tensor(&pair.person_b, stats, device)?.unsqueeze(0)?;
        let (z_o, z_a, z_b) = vae.encode_means(&x_a, &x_b)?;
        let token = Tensor::cat(&[&z_o, &z_a, &z_b], 1)?.squeeze(0)?.detach();
        tokens.push(token);
        texts.push(text_encoder.embed(&pair.text)?);
    }
    let tokens = Tensor::stack(&tokens, 0)?; // [M, 3l, d]
    let l = vae.cfg.latent_tokens;
    let global = tokens.narrow(1, 0, l)?;
    let individual = tokens.narrow(1, l, 2 * l)?;
    let std_of = |t: &Tensor| -> Result<f64> {
        let flat = t.flatten_all()?.to_dtype(DType::F64)?;
        let mean = flat.mean_all()?.to_scalar::<f64>()?;
        let var = (flat - mean)?.sqr()?.mean_all()?.to_scalar::<f64>()?;
        Ok(var.sqrt())
    };
    let s_global = std_of(&global)?.max(1e-6);
    let s_ind = std_of(&individual)?.max(1e-6);
    let token_scale = TokenScale::new(s_ind / s_global)?;
    let text_dim = text_encoder.dim();
    let flat_text: Vec<f32> = texts.into_iter().flatten().collect();
    let text = Tensor::from_vec(flat_text, (dataset.pairs.len(), text_dim), device)?;
    Ok(LatentCache {
        tokens,
        text,
        token_scale,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DenoiserEpochLog {
    pub epoch: usize,
    pub loss: f64,
}

pub struct TrainedDenoiser {
    pub model: Denoiser,
    pub token_scale: TokenScale,
    pub history: Vec<DenoiserEpochLog>,
    pub schedule: NoiseSchedule,
}

/// Train the epsilon-prediction denoiser on cached (scaled) latents.
pub fn train_denoiser(
    cache: &LatentCache,
    den_cfg: &DenoiserConfig,
    diff_cfg: &DiffusionConfig,
    train: &TrainConfig,
    device: &Device,
) -> Result<TrainedDenoiser> {
    diff_cfg.validate()?;
    let schedule = diff_cfg.schedule()?;
    let m = cache.tokens.dims3()?.0;
    if m == 0 {
        return Err(DuetError::InsufficientSamples { needed: 1, got: 0 });
    }
    let z0_all = cache
        .token_scale
        .scale(&cache.tokens, den_cfg.latent_tokens)?;

    let mut init_rng = rng_for(train.seed, "denoiser-init");
    let model = Denoiser::new(den_cfg, DType::F32, device, &mut init_rng)?;
    let mut opt = candle_nn::AdamW::new(
        model.store.all_vars(),
        candle_nn::ParamsAdamW {
            lr: train.learning_rate,
            weight_decay: train.weight_decay,
            ..Default::default()
        },
    )?;

    let mut rng = rng_for(train.seed, "denoiser-train");
    let mut history = Vec::with_capacity(train.epochs);
    let mut step = 0usize;
    for epoch in 0..train.epochs {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(train.batch_size) {
            let idx = Tensor::from_vec(
                chunk.iter().map(|i| *i as u32).collect::<Vec<u32>>(),
                chunk.len(),
                device,
            )?;
            let z0 = z0_all.index_select(&idx, 0)?;
            let text = cache.text.index_select(&idx, 0)?;
            let (loss, value) = training_loss(&model, &z0, &text, &mut rng, diff_cfg, &schedule)?;
            check_finite(value, step, "denoiser loss diverged")?;
            opt.backward_step(&loss)?;
            epoch_loss += value;
            n_batches += 1;
            step += 1;
        }
        history.push(DenoiserEpochLog {
            epoch,
            loss: epoch_loss / n_batches.max(1) as f64,
        });
    }
    Ok(TrainedDenoiser {
        model,
        token_scale: cache.token_scale,
        history,
        schedule,
    })
}

/// Mean per-joint position error in meters between two pair lists.
pub fn mpjpe(
    recon: &[crate::motion::sequence::InteractionPair],
    reference: &[crate::motion::sequence::InteractionPair],
    skeleton: &crate::motion::skeleton::SkeletonSpec,
) -> Result<f64> {
    use crate::motion::kinematics::joint_positions;
    if recon.len() != reference.len() || recon.is_empty() {
        return Err(DuetError::shape(
            format!("{} pairs", reference.len()),
            format!("{}", recon.len()),
        ));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, g) in recon.iter().zip(reference) {
        for (rs, gs) in [
            (&r.person_a, &g.person_a),
            (&r.person_b, &g.person_b),
        ] {
            let pr = joint_positions(rs, skeleton)?;
            let pg = joint_positions(gs, skeleton)?;
            for (fr, fg) in pr.iter().zip(&pg) {
                for (a, b) in fr.iter().zip(fg) {
                    total += (a - b).norm();
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}

/// Decode latent tokens back into denormalized motion pairs.
pub fn decode_tokens_to_pairs(
    vae: &Dhvae,
    stats: &NormStats,
    tokens: &Tensor,
    frames: usize,
    layout: crate::motion::sequence::MotionLayout,
    texts: &[String],
    contact_annotated: &[bool],
) -> Result<Vec<crate::motion::sequence::InteractionPair>> {
    use crate::motion::norm::denorm_buffer;
    let (b, _, _) = tokens.dims3()?;
    if texts.len() != b || contact_annotated.len() != b {
        return Err(DuetError::shape(format!("{b} labels"), format!("{}", texts.len())));
    }
    let l = vae.cfg.latent_tokens;
    let z_o = tokens.narrow(1, 0, l)?.contiguous()?;
    let z_a = tokens.narrow(1, l, l)?.contiguous()?;
    let z_b = tokens.narrow(1, 2 * l, l)?.contiguous()?;
    let mut none = None;
    let (recon_a, recon_b) = vae.decode(&z_o, &z_a, &z_b, frames, &mut none)?;
    let dim = vae.cfg.input_dim;
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let build = |recon: &Tensor| -> Result<MotionSequence> {
            let mut data: Vec<f32> = recon
                .narrow(0, i, 1)?
                .flatten_all()?
                .to_dtype(DType::F32)?
                .to_vec1::<f32>()?;
            denorm_buffer(&mut data, dim, stats);
            MotionSequence::new(layout, frames, data)
        };
        let a = build(&recon_a)?;
        let bseq = build(&recon_b)?;
        out.push(crate::motion::sequence::InteractionPair::new(
            a,
            bseq,
            texts[i].clone(),
            contact_annotated[i],
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::sequence::MotionLayout;
    use crate::motion::skeleton::SkeletonSpec;
    use crate::synth::synth_dataset;
    use crate::text::HashedTextEncoder;

    fn tiny_dataset(count: usize, frames: usize) -> Dataset {
        let skeleton = SkeletonSpec::toy_eight_joint();
        let layout = MotionLayout::pos_vel_rot(8);
        let pairs = synth_dataset(77, count, &skeleton, layout, (frames, frames)).unwrap();
        Dataset {
            pairs,
            skeleton,
            layout,
        }
    }

    #[test]
    fn one_epoch_smoke_run() {
        let ds = tiny_dataset(4, 16);
        let mut cfg = DhvaeConfig::toy(ds.layout.dim());
        cfg.hidden_dim = 32;
        cfg.heads = 2;
        cfg.latent_dim = 8;
        cfg.max_frames = 16;
        let train = TrainConfig {
            epochs: 1,
            batch_size: 2,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            seed: 5,
        };
        let out = train_vae(
            &ds,
            &cfg,
            &ContrastiveConfig::default(),
            &train,
            &Device::Cpu,
        )
        .unwrap();
        assert_eq!(out.history.len(), 1);
        assert!(out.history[0].total.is_finite());
        // Fresh model: constant z_o means the triplet term sits at the margin.
        assert!((out.history[0].triplet - 1.0).abs() < 0.2);
    }

    #[test]
    fn zero_triplet_weight_logs_zero() {
        let ds = tiny_dataset(4, 16);
        let mut cfg = DhvaeConfig::toy(ds.layout.dim());
        cfg.hidden_dim = 32;
        cfg.heads = 2;
        cfg.latent_dim = 8;
        cfg.max_frames = 16;
        cfg.triplet_weight = 0.0;
        let train = TrainConfig {
            epochs: 1,
            batch_size: 2,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            seed: 6,
        };
        let out = train_vae(
            &ds,
            &cfg,
            &ContrastiveConfig::default(),
            &train,
            &Device::Cpu,
        )
        .unwrap();
        assert_eq!(out.history[0].triplet, 0.0);
    }

    #[test]
    fn latent_cache_is_deterministic() {
        let ds = tiny_dataset(4, 16);
        let mut cfg = DhvaeConfig::toy(ds.layout.dim());
        cfg.hidden_dim = 32;
        cfg.heads = 2;
        cfg.latent_dim = 8;
        cfg.max_frames = 16;
        let mut rng = rng_for(7, "init");
        let vae = Dhvae::new(&cfg, DType::F32, &Device::Cpu, &mut rng).unwrap();
        let stats = NormStats::fit(ds.pairs.iter().flat_map(|p| [&p.person_a, &p.person_b]))
            .unwrap();
        let enc = HashedTextEncoder::default();
        let c1 = encode_latents(&ds, &vae, &stats, &enc, &Device::Cpu).unwrap();
        let c2 = encode_latents(&ds, &vae, &stats, &enc, &Device::Cpu).unwrap();
        assert_eq!(
            c1.tokens.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
            c2.tokens.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        );
        assert_eq!(c1.token_scale, c2.token_scale);
        assert!(c1.token_scale.s_l > 0.0);
    }

    #[test]
    fn denoiser_smoke_run_and_initial_loss() {
        let ds = tiny_dataset(8, 16);
        let mut cfg = DhvaeConfig::toy(ds.layout.dim());
        cfg.hidden_dim = 32;
        cfg.heads = 2;
        cfg.latent_dim = 8;
        cfg.max_frames = 16;
        let mut rng = rng_for(8, "init");
        let vae = Dhvae::new(&cfg, DType::F32, &Device::Cpu, &mut rng).unwrap();
        let stats = NormStats::fit(ds.pairs.iter().flat_map(|p| [&p.person_a, &p.person_b]))
            .unwrap();
        let enc = HashedTextEncoder::default();
        let cache = encode_latents(&ds, &vae, &stats, &enc, &Device::Cpu).unwrap();
        let mut den_cfg = DenoiserConfig::toy(cfg.latent_dim, enc.dim());
        den_cfg.layers = 5;
        den_cfg.hidden_dim = 32;
        den_cfg.heads = 2;
        let train = TrainConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            seed: 9,
        };
        let out = train_denoiser(
            &cache,
            &den_cfg,
            &DiffusionConfig::default(),
            &train,
            &Device::Cpu,
        )
        .unwrap();
        assert_eq!(out.history.len(), 2);
        // Zero-init head: the first losses hover near E|eps|^2 = 3 * 8 = 24.
        assert!(
            (out.history[0].loss - 24.0).abs() < 8.0,
            "first epoch loss {}",
            out.history[0].loss
        );
    }
}
