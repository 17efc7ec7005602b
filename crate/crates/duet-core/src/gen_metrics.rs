//! Feature-space generation metrics and the latent channel-statistics
//! diagnostic.
//!
//! The distribution distance follows
//! `d^2 = |mu - mu'|^2 + Tr(S + S' - 2 sqrt(S S'))`, with the matrix square
//! root taken by eigendecomposition of the symmetrized product
//! `sqrt(S) S' sqrt(S)`. Diversity and multimodality use squared norms, and
//! the text-motion distance is the root of the mean squared pair distance,
//! both exactly as defined, even where other codebases drop the square.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DuetError, Result};
use crate::motion::norm::NormStats;
use crate::motion::sequence::InteractionPair;
use crate::rng::DuetRng;
use crate::text::{HashedTextEncoder, TextEncoder};

/// Covariance regularizer added before the matrix square root.
const COV_EPS: f64 = 1e-6;

/// Deterministic map from clips and texts into a shared feature space.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    fn motion_features(&self, pair: &InteractionPair) -> Result<Vec<f32>>;
    fn text_features(&self, text: &str) -> Result<Vec<f32>>;
}

/// Desk-scale extractor: clips are resampled to a fixed frame count,
/// z-normalized, flattened and passed through a fixed random projection;
/// texts go through the hashed encoder and their own fixed projection into
/// the same space. Stands in for the pretrained evaluators of the full-scale
/// protocol, so absolute metric values are not comparable to published
/// numbers.
pub struct RandomProjectionExtractor {
    dim: usize,
    frames: usize,
    stats: NormStats,
    motion_proj: Vec<Vec<f32>>,
    text_proj: Vec<Vec<f32>>,
    text_encoder: HashedTextEncoder,
}

impl RandomProjectionExtractor {
    pub fn new(dim: usize, frames: usize, input_dim: usize, stats: NormStats, seed: u64) -> Self {
        let text_encoder = HashedTextEncoder::default();
        let motion_in = 2 * frames * input_dim;
        let mut rng = crate::rng::rng_for(seed, "feature-proj");
        let matrix = |rows: usize, cols: usize, rng: &mut DuetRng| -> Vec<Vec<f32>> {
            let scale = 1.0 / (cols as f64).sqrt();
            (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| {
                            (rng.sample::<f64, _>(rand_distr::StandardNormal) * scale) as f32
                        })
                        .collect()
                })
                .collect()
        };
        let motion_proj = matrix(dim, motion_in, &mut rng);
        let text_proj = matrix(dim, text_encoder.dim(), &mut rng);
        RandomProjectionExtractor {
            dim,
            frames,
            stats,
            motion_proj,
            text_proj,
            text_encoder,
        }
    }

    pub fn label(&self) -> String {
        format!("random-projection-{}d", self.dim)
    }
}

impl FeatureExtractor for RandomProjectionExtractor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn motion_features(&self, pair: &InteractionPair) -> Result<Vec<f32>> {
        let d = pair.person_a.dim();
        if self.stats.mean.len() != d {
            return Err(DuetError::shape(
                format!("stats dim {}", self.stats.mean.len()),
                format!("{d}"),
            ));
        }
        let n = pair.frames();
        let mut flat = Vec::with_capacity(2 * self.frames * d);
        for seq in [&pair.person_a, &pair.person_b] {
            for i in 0..self.frames {
                // Nearest-index resample to the fixed frame count.
                let t = i * n / self.frames;
                for (c, v) in seq.frame(t.min(n - 1)).iter().enumerate() {
                    flat.push((v - self.stats.mean[c]) / self.stats.std[c]);
                }
            }
        }
        Ok(self
            .motion_proj
            .iter()
            .map(|row| row.iter().zip(&flat).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn text_features(&self, text: &str) -> Result<Vec<f32>> {
        let e = self.text_encoder.embed(text)?;
        Ok(self
            .text_proj
            .iter()
            .map(|row| row.iter().zip(&e).map(|(a, b)| a * b).sum())
            .collect())
    }
}

fn mean_and_cov(features: &[Vec<f32>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.len();
    if n < 2 {
        return Err(DuetError::InsufficientSamples { needed: 2, got: n });
    }
    let d = features[0].len();
    let mut mean = DVector::zeros(d);
    for f in features {
        for (i, v) in f.iter().enumerate() {
            mean[i] += *v as f64;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for f in features {
        let x = DVector::from_iterator(d, f.iter().map(|v| *v as f64)) - &mean;
        cov += &x * x.transpose();
    }
    cov /= n as f64;
    Ok((mean, cov))
}

/// Symmetric PSD square root by eigendecomposition; eigenvalues below
/// `-1e-8` are an error, small negatives clamp to zero.
fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-8 {
            return Err(DuetError::SingularCovariance(format!(
                "eigenvalue {v} below tolerance"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = eig.eigenvectors;
    Ok(&q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Distribution distance between two feature sets (squared Frechet form).
pub fn fid(features_gen: &[Vec<f32>], features_ref: &[Vec<f32>]) -> Result<f64> {
    let (mu_g, mut cov_g) = mean_and_cov(features_gen)?;
    let (mu_r, mut cov_r) = mean_and_cov(features_ref)?;
    if mu_g.len() != mu_r.len() {
        return Err(DuetError::shape(
            format!("feature dim {}", mu_g.len()),
            format!("{}", mu_r.len()),
        ));
    }
    let d = mu_g.len();
    for i in 0..d {
        cov_g[(i, i)] += COV_EPS;
        cov_r[(i, i)] += COV_EPS;
    }
    fid_from_moments(&mu_g, &cov_g, &mu_r, &cov_r)
}

/// The closed-form distance between Gaussians with the given moments.
pub fn fid_from_moments(
    mu_g: &DVector<f64>,
    cov_g: &DMatrix<f64>,
    mu_r: &DVector<f64>,
    cov_r: &DMatrix<f64>,
) -> Result<f64> {
    let diff = mu_g - mu_r;
    // Tr sqrt(S S') = sum of sqrt eigenvalues of sqrt(S) S' sqrt(S).
    let s_half = sqrtm_psd(cov_g)?;
    let inner = &s_half * cov_r * &s_half;
    let sym = (&inner + inner.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut tr_sqrt = 0.0;
    for v in eig.eigenvalues.iter() {
        if *v < -1e-8 {
            return Err(DuetError::SingularCovariance(format!(
                "product eigenvalue {v} below tolerance"
            )));
        }
        tr_sqrt += v.max(0.0).sqrt();
    }
    let val = diff.norm_squared() + cov_g.trace() + cov_r.trace() - 2.0 * tr_sqrt;
    // Numerical cleanup: tiny negatives are zero.
    Ok(if val < 0.0 && val > -1e-6 { 0.0 } else { val })
}

fn dist_sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum()
}

/// Mean squared distance between two disjoint random subsets of size
/// `subset`.
pub fn diversity(features: &[Vec<f32>], subset: usize, rng: &mut DuetRng) -> Result<f64> {
    if 2 * subset > features.len() {
        return Err(DuetError::InsufficientSamples {
            needed: 2 * subset,
            got: features.len(),
        });
    }
    let mut idx: Vec<usize> = (0..features.len()).collect();
    idx.shuffle(rng);
    let total: f64 = (0..subset)
        .map(|i| dist_sq(&features[idx[i]], &features[idx[subset + i]]))
        .sum();
    Ok(total / subset as f64)
}

/// Per-class diversity averaged over classes.
pub fn multimodality(
    features_by_class: &[Vec<Vec<f32>>],
    per_class_subset: usize,
    rng: &mut DuetRng,
) -> Result<f64> {
    if features_by_class.is_empty() {
        return Err(DuetError::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for class in features_by_class {
        total += diversity(class, per_class_subset, rng)? * per_class_subset as f64;
    }
    Ok(total / (features_by_class.len() * per_class_subset) as f64)
}

/// Root of the mean squared distance between paired text/motion features.
pub fn mm_dist(text_features: &[Vec<f32>], motion_features: &[Vec<f32>]) -> Result<f64> {
    if text_features.len() != motion_features.len() || text_features.is_empty() {
        return Err(DuetError::shape(
            format!("{} paired features", text_features.len()),
            format!("{}", motion_features.len()),
        ));
    }
    let n = text_features.len();
    let total: f64 = text_features
        .iter()
        .zip(motion_features)
        .map(|(t, m)| dist_sq(t, m))
        .sum();
    Ok((total / n as f64).sqrt())
}

/// Retrieval accuracy: each motion ranks its true text against `pool - 1`
/// random mismatches; returns top-1/2/3 hit rates. Ties break toward the
/// lower candidate index (the ground truth is candidate 0).
pub fn r_precision(
    text_features: &[Vec<f32>],
    motion_features: &[Vec<f32>],
    pool: usize,
    rng: &mut DuetRng,
) -> Result<[f64; 3]> {
    let n = motion_features.len();
    if text_features.len() != n {
        return Err(DuetError::shape(format!("{n} texts"), format!("{}", text_features.len())));
    }
    if n < pool {
        return Err(DuetError::InsufficientSamples { needed: pool, got: n });
    }
    let mut hits = [0usize; 3];
    for i in 0..n {
        // Candidate 0 is the ground truth; the rest are sampled mismatches.
        let mut dists = Vec::with_capacity(pool);
        dists.push((dist_sq(&motion_features[i], &text_features[i]), 0usize));
        let mut chosen = 1usize;
        while chosen < pool {
            let j = rng.gen_range(0..n);
            if j == i {
                continue;
            }
            dists.push((dist_sq(&motion_features[i], &text_features[j]), chosen));
            chosen += 1;
        }
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if let Some(rank) = dists.iter().position(|(_, idx)| *idx == 0) {
            for (k, hit) in hits.iter_mut().enumerate() {
                if rank <= k {
                    *hit += 1;
                }
            }
        }
    }
    Ok([
        hits[0] as f64 / n as f64,
        hits[1] as f64 / n as f64,
        hits[2] as f64 / n as f64,
    ])
}

/// Channel statistics of latent sets grouped by segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentStats {
    /// Mean per-channel variance for (global, person-a, person-b).
    pub mean_channel_variance: [f64; 3],
    /// Frobenius norms of the cross-segment covariance matrices
    /// (global/a, global/b, a/b).
    pub cross_cov_frobenius: [f64; 3],
    /// Frobenius norms of the within-segment covariance matrices.
    pub within_cov_frobenius: [f64; 3],
    /// Analytic KL of the fitted diagonal Gaussian to the standard normal,
    /// per segment.
    pub kl_to_prior: [f64; 3],
}

/// Diagnostic over flattened per-sample latents (rows) for each segment.
pub fn latent_statistics(
    z_o: &[Vec<f32>],
    z_a: &[Vec<f32>],
    z_b: &[Vec<f32>],
) -> Result<LatentStats> {
    let n = z_o.len();
    if n < 2 || z_a.len() != n || z_b.len() != n {
        return Err(DuetError::InsufficientSamples {
            needed: 2,
            got: n.min(z_a.len()).min(z_b.len()),
        });
    }
    let seg = [z_o, z_a, z_b];
    let mut mean_var = [0.0; 3];
    let mut within = [0.0; 3];
    let mut kl = [0.0; 3];
    let mut moments = Vec::new();
    for s in 0..3 {
        let (mean, cov) = mean_and_cov(seg[s])?;
        let d = mean.len();
        let var_sum: f64 = (0..d).map(|i| cov[(i, i)]).sum();
        mean_var[s] = var_sum / d as f64;
        within[s] = cov.norm();
        // KL of the fitted diagonal Gaussian to N(0, I), summed over
        // channels (biased sample variance, floored for stability).
        kl[s] = (0..d)
            .map(|i| {
                let v = cov[(i, i)].max(1e-12);
                0.5 * (mean[i] * mean[i] + v - 1.0 - v.ln())
            })
            .sum();
        moments.push(mean);
    }
    let cross = |x: &[Vec<f32>], y: &[Vec<f32>], mx: &DVector<f64>, my: &DVector<f64>| {
        let d = mx.len();
        let mut c = DMatrix::zeros(d, d);
        for (fx, fy) in x.iter().zip(y) {
            let vx = DVector::from_iterator(d, fx.iter().map(|v| *v as f64)) - mx;
            let vy = DVector::from_iterator(d, fy.iter().map(|v| *v as f64)) - my;
            c += vx * vy.transpose();
        }
        (c / x.len() as f64).norm()
    };
    let cross_norm = [
        cross(seg[0], seg[1], &moments[0], &moments[1]),
        cross(seg[0], seg[2], &moments[0], &moments[2]),
        cross(seg[1], seg[2], &moments[1], &moments[2]),
    ];
    Ok(LatentStats {
        mean_channel_variance: mean_var,
        cross_cov_frobenius: cross_norm,
        within_cov_frobenius: within,
        kl_to_prior: kl,
    })
}

/// Aggregate fidelity report for a generated batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub fid: f64,
    pub diversity: f64,
    pub multimodality: Option<f64>,
    pub mm_dist: f64,
    pub r_precision: [f64; 3],
    pub generated_count: usize,
    pub reference_count: usize,
    pub seed: u64,
    pub extractor: String,
}
