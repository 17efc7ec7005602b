//! Pipeline commands. Each function is the body of one CLI verb and is
//! reused directly by the integration tests.

use std::path::{Path, PathBuf};

use candle_core::Device;
use serde::{Deserialize, Serialize};

use duet_core::checkpoint;
use duet_core::dataset::{load_dataset, save_dataset, Dataset};
use duet_core::diffusion::sample as ddim_sample;
use duet_core::error::{DuetError, Result};
use duet_core::gen_metrics::{
    diversity, fid, latent_statistics, mm_dist, multimodality, r_precision, EvalReport,
    FeatureExtractor, RandomProjectionExtractor,
};
use duet_core::motion::norm::NormStats;
use duet_core::physics::{penetration_metrics, BodyVolume, PenetrationReport, PhysicsParams};
use duet_core::rng::rng_for;
use duet_core::synth::{synth_dataset, Family};
use duet_core::text::{HashedTextEncoder, TextEncoder};
use duet_core::train::{
    decode_tokens_to_pairs, encode_latents, mpjpe, train_denoiser, train_vae, TrainedDenoiser,
    TrainedVae,
};

use crate::config::RunConfig;

pub struct SynthSummary {
    pub path: PathBuf,
    pub count: usize,
    pub layout_tag: String,
    pub contact_fraction: f64,
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<SynthSummary> {
    let skeleton = cfg.dataset.skeleton()?;
    let layout = cfg.dataset.motion_layout(&skeleton)?;
    let pairs = synth_dataset(
        cfg.seed,
        cfg.dataset.count,
        &skeleton,
        layout,
        (cfg.dataset.frames_min, cfg.dataset.frames_max),
    )?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_dataset(out, &pairs, &skeleton, layout)?;
    let contact_fraction =
        pairs.iter().filter(|p| p.contact_annotated).count() as f64 / pairs.len() as f64;
    Ok(SynthSummary {
        path: out.to_path_buf(),
        count: pairs.len(),
        layout_tag: layout.tag(),
        contact_fraction,
    })
}

pub fn cmd_train_vae(cfg: &RunConfig, dataset_path: &Path, out: &Path) -> Result<TrainedVae> {
    let dataset = load_dataset(dataset_path)?;
    let dhvae_cfg = cfg.dhvae.to_config(dataset.layout.dim());
    let trained = train_vae(
        &dataset,
        &dhvae_cfg,
        &cfg.contrastive,
        &cfg.train_vae,
        &Device::Cpu,
    )?;
    for log in &trained.history {
        println!(
            "epoch {:>4}  total {:>9.4}  recon {:>9.4}  kl {:>9.3}  joint {:>8.4}  triplet {:>7.4}  d+/d- {:.3}/{:.3}",
            log.epoch, log.total, log.recon, log.kl, log.joint, log.triplet,
            log.mean_d_pos, log.mean_d_neg
        );
    }
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    checkpoint::save_vae(out, &trained.model, dataset.layout, &trained.stats)?;
    Ok(trained)
}

pub fn cmd_train_denoiser(
    cfg: &RunConfig,
    dataset_path: &Path,
    vae_path: &Path,
    out: &Path,
) -> Result<TrainedDenoiser> {
    let dataset = load_dataset(dataset_path)?;
    let vae = checkpoint::load_vae(vae_path, &Device::Cpu)?;
    if vae.layout != dataset.layout {
        return Err(DuetError::CheckpointMismatch(format!(
            "vae layout {:?} vs dataset layout {:?}",
            vae.layout, dataset.layout
        )));
    }
    let text_encoder = HashedTextEncoder::new(cfg.denoiser.text_dim, 0x7e47);
    let cache = encode_latents(&dataset, &vae.model, &vae.stats, &text_encoder, &Device::Cpu)?;
    println!("token scale s_l = {:.6}", cache.token_scale.s_l);
    let den_cfg = cfg.denoiser.to_config(
        vae.model.cfg.latent_dim,
        vae.model.cfg.latent_tokens,
        cfg.diffusion.train_steps,
    );
    let trained = train_denoiser(&cache, &den_cfg, &cfg.diffusion, &cfg.train_denoiser, &Device::Cpu)?;
    for log in &trained.history {
        println!("epoch {:>4}  eps-loss {:>10.4}", log.epoch, log.loss);
    }
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    checkpoint::save_denoiser(out, &trained.model, &cfg.diffusion, trained.token_scale)?;
    Ok(trained)
}

pub struct SampleArgs {
    pub text: String,
    pub count: usize,
    pub seed: u64,
    pub omega: Option<f64>,
    pub steps: Option<usize>,
    pub frames: usize,
}

pub fn cmd_sample(
    cfg: &RunConfig,
    vae_path: &Path,
    denoiser_path: &Path,
    args: &SampleArgs,
    out: &Path,
) -> Result<Dataset> {
    let vae = checkpoint::load_vae(vae_path, &Device::Cpu)?;
    let den = checkpoint::load_denoiser(denoiser_path, &Device::Cpu)?;
    if den.model.cfg.latent_dim != vae.model.cfg.latent_dim
        || den.model.cfg.latent_tokens != vae.model.cfg.latent_tokens
    {
        return Err(DuetError::CheckpointMismatch(format!(
            "denoiser latent {}x{} vs vae latent {}x{}",
            den.model.cfg.latent_tokens,
            den.model.cfg.latent_dim,
            vae.model.cfg.latent_tokens,
            vae.model.cfg.latent_dim
        )));
    }
    let mut diffusion = den.diffusion.clone();
    if let Some(w) = args.omega {
        diffusion.cfg_scale = w;
    }
    if let Some(s) = args.steps {
        diffusion.inference_steps = s;
    }
    diffusion.validate()?;
    let schedule = diffusion.schedule()?;

    let text_encoder = HashedTextEncoder::new(den.model.cfg.text_dim, 0x7e47);
    let embed = text_encoder.embed(&args.text)?;
    let mut text_rows = Vec::with_capacity(args.count * embed.len());
    for _ in 0..args.count {
        text_rows.extend_from_slice(&embed);
    }
    let text = candle_core::Tensor::from_vec(
        text_rows,
        (args.count, embed.len()),
        &Device::Cpu,
    )
    .map_err(DuetError::from)?;

    let l = den.model.cfg.latent_tokens;
    let tokens = ddim_sample(
        &den.model,
        &text,
        args.count,
        (3 * l, den.model.cfg.latent_dim),
        &diffusion,
        &schedule,
        args.seed,
    )?;
    let tokens = den.token_scale.unscale(&tokens, l)?;

    let contact = Family::of_text(&args.text)
        .map(|f| f.expects_contact())
        .unwrap_or(false);
    let texts = vec![args.text.clone(); args.count];
    let contacts = vec![contact; args.count];
    let pairs = decode_tokens_to_pairs(
        &vae.model,
        &vae.stats,
        &tokens,
        args.frames,
        vae.layout,
        &texts,
        &contacts,
    )?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let skeleton = cfg.dataset.skeleton()?;
    save_dataset(out, &pairs, &skeleton, vae.layout)?;
    Ok(Dataset {
        pairs,
        skeleton,
        layout: vae.layout,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullReport {
    pub fidelity: Option<EvalReport>,
    pub physics: Option<PenetrationReport>,
    pub omega: Option<f64>,
}

pub struct EvalArgs {
    pub fidelity: bool,
    pub physics: bool,
    /// Treat every sequence as contact-annotated for the contact ratio.
    pub contact_all: bool,
    pub omega: Option<f64>,
}

pub fn cmd_eval(
    cfg: &RunConfig,
    generated_path: &Path,
    reference_path: &Path,
    args: &EvalArgs,
    out: &Path,
) -> Result<FullReport> {
    let generated = load_dataset(generated_path)?;
    let reference = load_dataset(reference_path)?;
    if generated.layout != reference.layout {
        return Err(DuetError::LayoutMismatch(format!(
            "generated {:?} vs reference {:?}",
            generated.layout, reference.layout
        )));
    }
    let mut report = FullReport {
        fidelity: None,
        physics: None,
        omega: args.omega,
    };

    if args.fidelity {
        let stats = NormStats::fit(
            reference
                .pairs
                .iter()
                .flat_map(|p| [&p.person_a, &p.person_b]),
        )?;
        let extractor = RandomProjectionExtractor::new(
            cfg.eval.feature_dim,
            cfg.eval.feature_frames,
            generated.layout.dim(),
            stats,
            cfg.seed,
        );
        let feats = |ds: &Dataset| -> Result<Vec<Vec<f32>>> {
            ds.pairs.iter().map(|p| extractor.motion_features(p)).collect()
        };
        let gen_features = feats(&generated)?;
        let ref_features = feats(&reference)?;
        let text_features: Vec<Vec<f32>> = generated
            .pairs
            .iter()
            .map(|p| extractor.text_features(&p.text))
            .collect::<Result<_>>()?;

        let mut rng = rng_for(cfg.seed, "eval");
        let subset = cfg
            .eval
            .diversity_subset
            .min(gen_features.len() / 2)
            .max(1);
        let div = diversity(&gen_features, subset, &mut rng)?;
        // Group by family for multimodality when at least two groups have
        // enough members.
        let mut by_family: std::collections::BTreeMap<&'static str, Vec<Vec<f32>>> =
            Default::default();
        for (pair, f) in generated.pairs.iter().zip(&gen_features) {
            if let Some(fam) = Family::of_text(&pair.text) {
                by_family.entry(fam.label()).or_default().push(f.clone());
            }
        }
        let per_class = subset.min(4).max(1);
        let classes: Vec<Vec<Vec<f32>>> = by_family
            .into_values()
            .filter(|v| v.len() >= 2 * per_class)
            .collect();
        let mmod = if classes.is_empty() {
            None
        } else {
            Some(multimodality(&classes, per_class, &mut rng)?)
        };
        let rp = if gen_features.len() >= cfg.eval.r_precision_pool {
            r_precision(
                &text_features,
                &gen_features,
                cfg.eval.r_precision_pool,
                &mut rng,
            )?
        } else {
            [f64::NAN; 3]
        };
        report.fidelity = Some(EvalReport {
            fid: fid(&gen_features, &ref_features)?,
            diversity: div,
            multimodality: mmod,
            mm_dist: mm_dist(&text_features, &gen_features)?,
            r_precision: rp,
            generated_count: generated.pairs.len(),
            reference_count: reference.pairs.len(),
            seed: cfg.seed,
            extractor: extractor.label(),
        });
    }

    if args.physics {
        let body = BodyVolume::from_skeleton(&generated.skeleton)?;
        report.physics = Some(penetration_metrics(
            &generated.pairs,
            &generated.skeleton,
            &body,
            &PhysicsParams::default(),
            args.contact_all,
        )?);
    }

    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Latent channel-statistics diagnostic against a VAE checkpoint.
pub fn cmd_latent_stats(
    dataset_path: &Path,
    vae_path: &Path,
    out: &Path,
) -> Result<duet_core::gen_metrics::LatentStats> {
    let dataset = load_dataset(dataset_path)?;
    let vae = checkpoint::load_vae(vae_path, &Device::Cpu)?;
    let text_encoder = HashedTextEncoder::default();
    let cache = encode_latents(&dataset, &vae.model, &vae.stats, &text_encoder, &Device::Cpu)?;
    let tokens = cache.tokens;
    let (m, _, d) = tokens.dims3().map_err(DuetError::from)?;
    let l = vae.model.cfg.latent_tokens;
    let rows = |offset: usize| -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let row = tokens
                .narrow(0, i, 1)
                .and_then(|t| t.narrow(1, offset, l))
                .and_then(|t| t.flatten_all())
                .and_then(|t| t.to_vec1::<f32>())
                .map_err(DuetError::from)?;
            debug_assert_eq!(row.len(), l * d);
            out.push(row);
        }
        Ok(out)
    };
    let stats = latent_statistics(&rows(0)?, &rows(l)?, &rows(2 * l)?)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, serde_json::to_string_pretty(&stats)?)?;
    Ok(stats)
}

/// Reconstruction error of a trained VAE on a dataset, in meters.
pub fn reconstruction_mpjpe(dataset: &Dataset, vae: &checkpoint::LoadedVae) -> Result<f64> {
    use duet_core::motion::norm::znorm;
    let device = Device::Cpu;
    let mut recon_pairs = Vec::with_capacity(dataset.pairs.len());
    for pair in &dataset.pairs {
        let to_tensor = |seq: &duet_core::motion::sequence::MotionSequence| -> Result<candle_core::Tensor> {
            let normed = znorm(seq, &vae.stats)?;
            Ok(candle_core::Tensor::from_vec(
                normed.data,
                (1, seq.frames, seq.dim()),
                &device,
            )
            .map_err(DuetError::from)?)
        };
        let x_a = to_tensor(&pair.person_a)?;
        let x_b = to_tensor(&pair.person_b)?;
        let (z_o, z_a, z_b) = vae.model.encode_means(&x_a, &x_b)?;
        let tokens = candle_core::Tensor::cat(&[&z_o, &z_a, &z_b], 1).map_err(DuetError::from)?;
        let recon = decode_tokens_to_pairs(
            &vae.model,
            &vae.stats,
            &tokens,
            pair.frames(),
            dataset.layout,
            &[pair.text.clone()],
            &[pair.contact_annotated],
        )?;
        recon_pairs.extend(recon);
    }
    mpjpe(&recon_pairs, &dataset.pairs, &dataset.skeleton)
}
