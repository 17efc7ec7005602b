//! Monte-Carlo and statistical oracles: posterior KL, reparameterization
//! moments, forward-diffusion marginals, truncated-normal jitter moments,
//! negative-shift direction uniformity, and the diffusion training-loss
//! contracts.

use candle_core::{DType, Device, Tensor};
use duet_core::denoiser::TokenScale;
use duet_core::dhvae::posterior::{kl_scalar, reparameterize, GaussianPosterior};
use duet_core::diffusion::{
    q_sample, training_loss, CondBatch, DiffusionConfig, EpsilonModel, NoiseSchedule,
};
use duet_core::contrastive::{sample_negative_delta, sample_positive_delta, ContrastiveConfig};
use duet_core::error::Result;
use duet_core::rng::{normal_tensor, normal_vec, rng_for};
use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

#[test]
fn kl_matches_monte_carlo_for_random_posteriors() {
    let dev = Device::Cpu;
    let mut rng = rng_for(1, "posteriors");
    let d = 8;
    let draws = 100_000;
    for case in 0..20 {
        let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let log_var: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = GaussianPosterior::new(
            Tensor::from_vec(mean.clone(), (1, 1, d), &dev).unwrap(),
            Tensor::from_vec(log_var.clone(), (1, 1, d), &dev).unwrap(),
        )
        .unwrap();
        let analytic = kl_scalar(&p).unwrap();

        // Monte-Carlo estimate of E_q[log q(z) - log p(z)].
        let mut mc_rng = rng_for(case as u64 + 10, "mc");
        let mut acc = 0.0f64;
        for _ in 0..draws {
            let mut log_q = 0.0;
            let mut log_p = 0.0;
            for i in 0..d {
                let sigma = (0.5 * log_var[i]).exp();
                let eps: f64 = mc_rng.sample(rand_distr::StandardNormal);
                let z = mean[i] + sigma * eps;
                log_q += -0.5 * (eps * eps) - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
                log_p += -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            acc += log_q - log_p;
        }
        let mc = acc / draws as f64;
        let rel = (mc - analytic).abs() / analytic.abs().max(1e-9);
        assert!(
            rel < 0.01,
            "case {case}: analytic {analytic:.6}, mc {mc:.6}, rel {rel:.4}"
        );
    }
}

#[test]
fn reparameterize_moments() {
    let dev = Device::Cpu;
    let d = 4;
    let p = GaussianPosterior::new(
        Tensor::zeros((1, 1, d), DType::F64, &dev).unwrap(),
        Tensor::zeros((1, 1, d), DType::F64, &dev).unwrap(),
    )
    .unwrap();
    let draws = 100_000;
    let mut rng = rng_for(2, "reparam");
    let mut sum = vec![0.0f64; d];
    let mut sum_sq = vec![0.0f64; d];
    for _ in 0..draws {
        let z = reparameterize(&p, &mut rng).unwrap();
        let v = z.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for i in 0..d {
            sum[i] += v[i];
            sum_sq[i] += v[i] * v[i];
        }
    }
    for i in 0..d {
        let mean = sum[i] / draws as f64;
        let var = sum_sq[i] / draws as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "channel {i} mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "channel {i} var {var}");
    }
}

#[test]
fn forward_marginal_moments_at_paper_timesteps() {
    // Criterion 3 at full strength lives in the acceptance suite; this keeps
    // a fast regression at t = 500 only.
    let schedule = NoiseSchedule::default_scaled_linear();
    let dev = Device::Cpu;
    let d = 8;
    let z0_vals: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 10.0 } else { -10.0 }).collect();
    let z0 = Tensor::from_vec(z0_vals.clone(), (1, 1, d), &dev).unwrap();
    let t = 500;
    let ab = schedule.alpha_bar(t).unwrap();
    let draws = 10_000;
    let mut rng = rng_for(3, "qsample");
    let mut sum = vec![0.0f64; d];
    let mut sum_sq = vec![0.0f64; d];
    for _ in 0..draws {
        let noise = normal_tensor(&mut rng, (1, 1, d), DType::F64, &dev).unwrap();
        let zt = q_sample(&z0, &[t], &noise, &schedule).unwrap();
        let v = zt.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for i in 0..d {
            sum[i] += v[i];
            sum_sq[i] += v[i] * v[i];
        }
    }
    for i in 0..d {
        let mean = sum[i] / draws as f64;
        let var = sum_sq[i] / draws as f64 - mean * mean;
        let want_mean = ab.sqrt() * z0_vals[i];
        let want_var = 1.0 - ab;
        assert!(
            (mean - want_mean).abs() < 0.05 * want_mean.abs(),
            "channel {i}: mean {mean} vs {want_mean}"
        );
        assert!(
            (var - want_var).abs() < 0.05 * want_var,
            "channel {i}: var {var} vs {want_var}"
        );
    }
}

#[test]
fn positive_jitter_matches_truncated_normal_moments() {
    let cfg = ContrastiveConfig::default();
    // Truncated-normal standard deviation at a +-3 sigma cut:
    // sigma * sqrt(1 - 2*a*phi(a) / (2*Phi(a) - 1)) with a = 3.
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let a = 3.0;
    let phi = std_normal.pdf(a);
    let mass = 2.0 * std_normal.cdf(a) - 1.0;
    let trunc_factor = (1.0 - 2.0 * a * phi / mass).sqrt();
    let want_std = cfg.sigma_c * trunc_factor;

    let draws = 10_000;
    let mut rng = rng_for(4, "jitter");
    let mut sum_sq = 0.0f64;
    for _ in 0..draws {
        let d = sample_positive_delta(&mut rng, true, &cfg);
        assert!(d[0].abs() <= 3.0 * cfg.sigma_c + 1e-12);
        assert!(d[1].abs() <= 3.0 * cfg.sigma_c + 1e-12);
        sum_sq += d[0] * d[0] + d[1] * d[1];
    }
    let emp_std = (sum_sq / (2 * draws) as f64).sqrt();
    let rel = (emp_std - want_std).abs() / want_std;
    assert!(
        rel < 0.05,
        "empirical std {emp_std:.5} vs truncated-normal {want_std:.5} (rel {rel:.4})"
    );
}

#[test]
fn negative_shift_direction_is_uniform() {
    let cfg = ContrastiveConfig::default();
    let draws = 10_000;
    let sectors = 8usize;
    let mut counts = vec![0usize; sectors];
    let mut rng = rng_for(5, "neg");
    for _ in 0..draws {
        let d = sample_negative_delta(&mut rng, &cfg);
        let mag = (d[0] * d[0] + d[1] * d[1]).sqrt();
        assert!((0.45..=0.90).contains(&mag));
        let angle = d[1].atan2(d[0]).rem_euclid(std::f64::consts::TAU);
        let sector = ((angle / std::f64::consts::TAU) * sectors as f64) as usize;
        counts[sector.min(sectors - 1)] += 1;
    }
    let expected = draws as f64 / sectors as f64;
    let chi2: f64 = counts
        .iter()
        .map(|c| {
            let d = *c as f64 - expected;
            d * d / expected
        })
        .sum();
    // Critical value of chi-square with 7 degrees of freedom at p = 0.01.
    assert!(chi2 < 18.475, "chi-square {chi2:.2}, counts {counts:?}");
}

/// Stub that reconstructs the exact injected noise from (z_t, t) and the
/// clean latents it holds.
struct PerfectEps {
    z0: Tensor,
    schedule: NoiseSchedule,
}

impl EpsilonModel for PerfectEps {
    fn predict(&self, z_t: &Tensor, t: &[usize], _cond: &CondBatch) -> Result<Tensor> {
        let ab = self.schedule.alpha_bar(t[0])?;
        Ok(((z_t - (&self.z0 * ab.sqrt())?)? / (1.0 - ab).sqrt())?)
    }
}

/// Stub that always predicts zero.
struct ZeroEps;

impl EpsilonModel for ZeroEps {
    fn predict(&self, z_t: &Tensor, _t: &[usize], _cond: &CondBatch) -> Result<Tensor> {
        Ok(z_t.zeros_like()?)
    }
}

/// Stub that records which conditions it saw.
struct SpyEps {
    seen: std::sync::Mutex<Vec<bool>>,
}

impl EpsilonModel for SpyEps {
    fn predict(&self, z_t: &Tensor, _t: &[usize], cond: &CondBatch) -> Result<Tensor> {
        self.seen.lock().unwrap().extend(cond.uncond.iter().copied());
        Ok(z_t.zeros_like()?)
    }
}

#[test]
fn training_loss_contracts() {
    let dev = Device::Cpu;
    let cfg = DiffusionConfig::default();
    let schedule = cfg.schedule().unwrap();
    let d = 6;
    let tokens = 3;
    let mut rng = rng_for(6, "z0");
    // Batch of one so the perfect stub sees a single timestep.
    let z0 = normal_tensor(&mut rng, (1, tokens, d), DType::F64, &dev).unwrap();
    let text = Tensor::zeros((1, 4), DType::F64, &dev).unwrap();

    let perfect = PerfectEps {
        z0: z0.clone(),
        schedule: schedule.clone(),
    };
    let mut loss_rng = rng_for(7, "loss");
    let (_, value) = training_loss(&perfect, &z0, &text, &mut loss_rng, &cfg, &schedule).unwrap();
    assert!(value.abs() < 1e-18, "perfect denoiser loss {value}");

    // Zero predictor: loss averages E|eps|^2 = tokens * d per sample.
    let mut acc = 0.0;
    let reps = 1_000;
    let mut loss_rng = rng_for(8, "loss");
    for _ in 0..reps {
        let (_, v) = training_loss(&ZeroEps, &z0, &text, &mut loss_rng, &cfg, &schedule).unwrap();
        acc += v;
    }
    let mean = acc / reps as f64;
    let want = (tokens * d) as f64;
    assert!(
        (mean - want).abs() < 0.05 * want,
        "zero-denoiser loss {mean} vs {want}"
    );

    // uncond_ratio = 1: the condition never reaches the model.
    let spy = SpyEps {
        seen: Default::default(),
    };
    let all_uncond = DiffusionConfig {
        uncond_ratio: 1.0,
        ..cfg
    };
    let mut loss_rng = rng_for(9, "loss");
    for _ in 0..50 {
        training_loss(&spy, &z0, &text, &mut loss_rng, &all_uncond, &schedule).unwrap();
    }
    let seen = spy.seen.lock().unwrap();
    assert!(!seen.is_empty() && seen.iter().all(|u| *u));
}

#[test]
fn token_scale_from_latent_stds_balances_segments() {
    // Build synthetic latents with very different segment scales and check
    // that dividing by the std ratio equalizes them.
    let dev = Device::Cpu;
    let mut rng = rng_for(10, "tokens");
    let n = 400;
    let d = 16;
    let global: Vec<f64> = normal_vec(&mut rng, n * d).iter().map(|v| v * 0.2).collect();
    let individual: Vec<f64> = normal_vec(&mut rng, 2 * n * d).iter().map(|v| v * 1.7).collect();
    let std = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let s_l = std(&individual) / std(&global);
    let ts = TokenScale::new(s_l).unwrap();
    let mut tokens_vec = Vec::with_capacity(n * 3 * d);
    for i in 0..n {
        tokens_vec.extend_from_slice(&global[i * d..(i + 1) * d]);
        tokens_vec.extend_from_slice(&individual[2 * i * d..(2 * i + 2) * d]);
    }
    let tokens = Tensor::from_vec(tokens_vec, (n, 3, d), &dev).unwrap();
    let scaled = ts.scale(&tokens, 1).unwrap();
    let g = scaled
        .narrow(1, 0, 1)
        .unwrap()
        .flatten_all()
        .unwrap()
        .to_vec1::<f64>()
        .unwrap();
    let ind = scaled
        .narrow(1, 1, 2)
        .unwrap()
        .flatten_all()
        .unwrap()
        .to_vec1::<f64>()
        .unwrap();
    let ratio = std(&ind) / std(&g);
    assert!(
        (ratio - 1.0).abs() < 0.1,
        "post-scale segment std ratio {ratio}"
    );
}
