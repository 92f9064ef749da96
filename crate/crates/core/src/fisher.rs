//! Fisher vector encoding against a GMM codebook.
//!
//! The raw encoding of a descriptor set `X = {x_t}` holds, for each component
//! `k` and dimension `d`,
//!
//! ```text
//! mean:     1 / (T sqrt(w_k))   * sum_t gamma_t(k) (x_td - mu_kd) / sigma_kd
//! variance: 1 / (T sqrt(2 w_k)) * sum_t gamma_t(k) [((x_td - mu_kd) / sigma_kd)^2 - 1]
//! ```
//!
//! laid out as all `K` mean blocks followed by all `K` variance blocks, so the
//! vector has length `2 K D`. [`normalize_fv`] applies signed square-root and
//! L2 normalization.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;

/// Responsibilities below this are dropped from the accumulation.
pub const GAMMA_CUTOFF: f64 = 1e-6;

/// Norm tolerance for vectors flagged as normalized.
pub const UNIT_NORM_TOL: f64 = 1e-6;

const CHUNK_ROWS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector {
    values: Vec<f64>,
    normalized: bool,
}

impl FisherVector {
    /// Wraps an unnormalized encoding.
    pub fn raw(values: Vec<f64>) -> Result<Self> {
        Self::from_parts(values, false)
    }

    pub fn from_parts(values: Vec<f64>, normalized: bool) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("fisher vector has non-finite entries".into()));
        }
        if normalized {
            let norm = l2_norm(&values);
            if norm != 0.0 && (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "vector flagged normalized has norm {norm}"
                )));
            }
        }
        Ok(Self { values, normalized })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Encoded length for a codebook with `k` components of dimension `dim`.
pub fn fv_dim(k: usize, dim: usize) -> usize {
    2 * k * dim
}

/// Unnormalized sums `sum_t gamma (x - mu)/sigma` and `sum_t gamma (z^2 - 1)`,
/// in the output layout.
fn accumulate(gmm: &GaussianMixture, set: &DescriptorSet, rows: &[usize], inv_std: &[f64]) -> Vec<f64> {
    let k = gmm.components();
    let dim = gmm.dim();
    let half = k * dim;
    let mut acc = vec![0.0; 2 * half];
    let mut gamma = vec![0.0; k];
    for &t in rows {
        let x = set.row(t);
        gmm.posteriors_into(x, &mut gamma);
        for (c, &g) in gamma.iter().enumerate() {
            if g < GAMMA_CUTOFF {
                continue;
            }
            let mu = gmm.mean(c);
            let is = &inv_std[c * dim..(c + 1) * dim];
            let (mean_block, var_block) = (c * dim, half + c * dim);
            for d in 0..dim {
                let z = (x[d] - mu[d]) * is[d];
                acc[mean_block + d] += g * z;
                acc[var_block + d] += g * (z * z - 1.0);
            }
        }
    }
    acc
}

/// Raw Fisher vector of `descriptors` under `gmm`.
///
/// Rows are visited in a canonical (sorted) order and reduced in fixed-size
/// chunks, so the output is bit-identical under any permutation of the input
/// and any thread count.
pub fn encode_fv(gmm: &GaussianMixture, descriptors: &DescriptorSet) -> Result<FisherVector> {
    gmm.check_set(descriptors)?;
    if descriptors.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no descriptors to encode",
            descriptors.image_id()
        )));
    }
    descriptors.check_finite()?;

    let k = gmm.components();
    let dim = gmm.dim();
    let inv_std: Vec<f64> = gmm.variances().iter().map(|v| 1.0 / v.sqrt()).collect();
    let order = descriptors.canonical_order();
    let partials: Vec<Vec<f64>> = order
        .par_chunks(CHUNK_ROWS)
        .map(|rows| accumulate(gmm, descriptors, rows, &inv_std))
        .collect();
    let mut values = vec![0.0; 2 * k * dim];
    for p in &partials {
        for (v, a) in values.iter_mut().zip(p) {
            *v += a;
        }
    }

    let t = descriptors.len() as f64;
    for (c, &w) in gmm.weights().iter().enumerate() {
        let mean_scale = 1.0 / (t * w.sqrt());
        let var_scale = 1.0 / (t * (2.0 * w).sqrt());
        for d in 0..dim {
            values[c * dim + d] *= mean_scale;
            values[k * dim + c * dim + d] *= var_scale;
        }
    }
    FisherVector::raw(values)
}

/// Signed square root followed by L2 normalization. An all-zero vector stays
/// zero. Rejects input that was already normalized.
pub fn normalize_fv(fv: &FisherVector) -> Result<FisherVector> {
    if fv.normalized {
        return Err(Error::DoubleNormalization);
    }
    let mut values: Vec<f64> = fv.values.iter().map(|z| z.signum() * z.abs().sqrt()).collect();
    // signum(0.0) is 1.0 but sqrt(0) keeps the product at zero
    let norm = l2_norm(&values);
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(FisherVector {
        values,
        normalized: true,
    })
}

/// Descriptor distribution `p = w q + (1 - w) r` with foreground `q` and
/// background `r`.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    foreground: GaussianMixture,
    background: GaussianMixture,
    w: f64,
}

impl MixtureSpec {
    pub fn new(foreground: GaussianMixture, background: GaussianMixture, w: f64) -> Result<Self> {
        if foreground.dim() != background.dim() {
            return Err(Error::Shape(format!(
                "foreground dimension {} differs from background {}",
                foreground.dim(),
                background.dim()
            )));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidInput(format!("foreground proportion {w} outside [0, 1]")));
        }
        Ok(Self {
            foreground,
            background,
            w,
        })
    }

    pub fn foreground(&self) -> &GaussianMixture {
        &self.foreground
    }

    pub fn background(&self) -> &GaussianMixture {
        &self.background
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn dim(&self) -> usize {
        self.foreground.dim()
    }

    /// Draws `n` descriptors: `round(w n)` from the foreground, the rest
    /// from the background, foreground rows first.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(DescriptorSet, usize)> {
        let (n_fg, n_bg) = self.split(n)?;
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let (fg_seed, bg_seed): (u64, u64) = (seeds.random(), seeds.random());
        let mut out = DescriptorSet::empty("mixture", self.dim())?;
        if n_fg > 0 {
            out.extend(&self.foreground.sample(n_fg, fg_seed)?)?;
        }
        if n_bg > 0 {
            out.extend(&self.background.sample(n_bg, bg_seed)?)?;
        }
        Ok((out, n_fg))
    }

    fn split(&self, n: usize) -> Result<(usize, usize)> {
        let n_fg = (self.w * n as f64).round() as usize;
        let n_fg = n_fg.min(n);
        let n_bg = n - n_fg;
        let interior = self.w > 0.0 && self.w < 1.0;
        if interior && (n_fg == 0 || n_bg == 0) {
            return Err(Error::DegenerateSplit(format!(
                "w = {} with n = {n} leaves {n_fg} foreground and {n_bg} background descriptors",
                self.w
            )));
        }
        Ok((n_fg, n_bg))
    }
}

/// Output of [`decomposition_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    /// Requested foreground proportion.
    pub w: f64,
    /// Realized proportion `T_fg / T` used in the linear identity.
    pub effective_w: f64,
    pub n_foreground: usize,
    pub n_background: usize,
    pub fv_dim: usize,
    /// `||fv_mix - w' fv_fg - (1 - w') fv_bg|| / ||fv_mix||` with `w'` the
    /// realized proportion.
    pub residual_norm: f64,
    pub mixture_norm: f64,
    /// `||w' fv_fg||`.
    pub foreground_term_norm: f64,
    /// `||(1 - w') fv_bg||`; zero exactly when the background contributes
    /// nothing to the codebook gradient.
    pub background_term_norm: f64,
    #[serde(skip)]
    pub fv_mix: FisherVector,
    /// Zero vector when there are no foreground descriptors.
    #[serde(skip)]
    pub fv_fg: FisherVector,
    /// Zero vector when there are no background descriptors.
    #[serde(skip)]
    pub fv_bg: FisherVector,
}

/// Minimum sample size for [`decomposition_experiment`].
pub const MIN_DECOMPOSITION_SAMPLES: usize = 1000;

/// Samples the mixture, encodes the mixture, foreground and background parts
/// against `codebook`, and measures how well the mixture encoding splits into
/// the proportion-weighted part encodings.
pub fn decomposition_experiment(
    spec: &MixtureSpec,
    codebook: &GaussianMixture,
    n: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    if codebook.dim() != spec.dim() {
        return Err(Error::Shape(format!(
            "codebook dimension {} differs from mixture dimension {}",
            codebook.dim(),
            spec.dim()
        )));
    }
    if n < MIN_DECOMPOSITION_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "decomposition needs at least {MIN_DECOMPOSITION_SAMPLES} samples, got {n}"
        )));
    }
    let (mixture, n_fg) = spec.sample(n, seed)?;
    let n_bg = n - n_fg;
    let dim = codebook.dim();
    let len = fv_dim(codebook.components(), dim);

    let part = |rows: std::ops::Range<usize>, name: &str| -> Result<FisherVector> {
        if rows.is_empty() {
            return FisherVector::raw(vec![0.0; len]);
        }
        let idx: Vec<usize> = rows.collect();
        let mut set = mixture.select(&idx);
        set.set_image_id(name);
        encode_fv(codebook, &set)
    };
    let fv_mix = encode_fv(codebook, &mixture)?;
    let fv_fg = part(0..n_fg, "foreground")?;
    let fv_bg = part(n_fg..n, "background")?;

    let effective_w = n_fg as f64 / n as f64;
    let mut fg_term = 0.0;
    let mut bg_term = 0.0;
    let mut residual = 0.0;
    for i in 0..len {
        let a = effective_w * fv_fg.values[i];
        let b = (1.0 - effective_w) * fv_bg.values[i];
        fg_term += a * a;
        bg_term += b * b;
        let r = fv_mix.values[i] - a - b;
        residual += r * r;
    }
    let mixture_norm = fv_mix.norm();
    let residual = residual.sqrt();
    let residual_norm = if mixture_norm > 0.0 {
        residual / mixture_norm
    } else {
        residual
    };

    Ok(DecompositionReport {
        w: spec.w,
        effective_w,
        n_foreground: n_fg,
        n_background: n_bg,
        fv_dim: len,
        residual_norm,
        mixture_norm,
        foreground_term_norm: fg_term.sqrt(),
        background_term_norm: bg_term.sqrt(),
        fv_mix,
        fv_fg,
        fv_bg,
    })
}
