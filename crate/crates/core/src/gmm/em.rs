use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kmeans, GaussianMixture};
use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

/// Rows per E-step work unit. Partial sums are combined in chunk order, so
/// results do not depend on the number of worker threads.
const CHUNK_ROWS: usize = 2048;

/// Components whose responsibility mass falls below this are re-seeded.
const STARVED_MASS: f64 = 1e-10;

/// Lower bound on every mixing weight.
pub const WEIGHT_FLOOR: f64 = 1e-6;

const KMEANS_ITERS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the relative mean log-likelihood improvement drops below this.
    pub tol: f64,
    pub seed: u64,
    /// Variance floor as a fraction of the per-dimension data variance.
    pub variance_floor_fraction: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-5,
            seed: 0,
            variance_floor_fraction: 1e-4,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("em.max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config("em.tol must be positive".into()));
        }
        if !(self.variance_floor_fraction > 0.0 && self.variance_floor_fraction.is_finite()) {
            return Err(Error::Config("em.variance_floor_fraction must be positive".into()));
        }
        Ok(())
    }
}

/// Result of an EM run with its per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: GaussianMixture,
    /// Mean log-likelihood of the initial model followed by the value after
    /// every M-step.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations (1-based) in which a starved component was re-seeded.
    /// The likelihood may drop at these steps.
    pub reinitializations: Vec<usize>,
}

/// Fits a `k`-component diagonal mixture to `descriptors`.
pub fn fit_gmm(descriptors: &DescriptorSet, k: usize, config: &EmConfig) -> Result<GaussianMixture> {
    fit_gmm_traced(descriptors, k, config).map(|r| r.model)
}

/// Per-dimension variance floor: `fraction` times the data variance.
///
/// A dimension with zero spread borrows the mean variance of the other
/// dimensions (or 1 if the data is constant everywhere).
pub fn variance_floor(descriptors: &DescriptorSet, fraction: f64) -> Vec<f64> {
    let (_, var) = column_moments(descriptors);
    floor_from_variance(&var, fraction)
}

fn floor_from_variance(var: &[f64], fraction: f64) -> Vec<f64> {
    let positive: Vec<f64> = var.iter().copied().filter(|v| *v > 0.0).collect();
    let fallback = if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    };
    var.iter()
        .map(|&v| fraction * if v > 0.0 { v } else { fallback })
        .collect()
}

fn column_moments(set: &DescriptorSet) -> (Vec<f64>, Vec<f64>) {
    let dim = set.dim();
    let n = set.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in set.rows() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in set.rows() {
        for d in 0..dim {
            let c = x[d] - mean[d];
            var[d] += c * c;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// Fits like [`fit_gmm`] and also returns the likelihood trace.
pub fn fit_gmm_traced(descriptors: &DescriptorSet, k: usize, config: &EmConfig) -> Result<FitReport> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidInput("component count must be at least 1".into()));
    }
    descriptors.check_finite()?;
    let t = descriptors.len();
    if t < k {
        return Err(Error::InsufficientData(format!(
            "{t} descriptors cannot support {k} components"
        )));
    }
    if k > 1 && descriptors.distinct_rows() < k {
        return Err(Error::DegenerateData(format!(
            "fewer than {k} distinct descriptors; components would coincide"
        )));
    }

    let (center, global_var) = column_moments(descriptors);
    let floor = floor_from_variance(&global_var, config.variance_floor_fraction);
    let reset_var: Vec<f64> = global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = initialize(descriptors, k, &floor, &reset_var, &mut rng)?;

    let mut stats = e_step(&model, descriptors, &center);
    let mut prev = stats.mean_log_likelihood(t);
    let mut trace = vec![prev];
    let mut reinitializations = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iters {
        iterations = iter;
        let (next, reseeded) = m_step(&model, &stats, descriptors, &center, &floor, &reset_var)?;
        if reseeded {
            reinitializations.push(iter);
        }
        model = next;
        stats = e_step(&model, descriptors, &center);
        let ll = stats.mean_log_likelihood(t);
        trace.push(ll);
        let scale = if prev != 0.0 { prev.abs() } else { 1.0 };
        if !reseeded && (ll - prev) < config.tol * scale {
            converged = true;
            break;
        }
        prev = ll;
    }

    log::debug!(
        "em: k={k} t={t} iterations={iterations} converged={converged} ll={:.6}",
        trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(FitReport {
        model,
        log_likelihood_trace: trace,
        iterations,
        converged,
        reinitializations,
    })
}

fn initialize(
    set: &DescriptorSet,
    k: usize,
    floor: &[f64],
    reset_var: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<GaussianMixture> {
    let dim = set.dim();
    let t = set.len();
    let m = t.min(10 * k * dim);
    let sub = if m < t {
        let mut picked = index::sample(rng, t, m).into_vec();
        picked.sort_unstable();
        set.select(&picked)
    } else {
        set.clone()
    };

    let (sub, mut centers) = match kmeans::plus_plus(&sub, k, rng) {
        Some(c) => (sub, c),
        // the subsample collapsed onto fewer than k points; seed from everything
        None => {
            let c = kmeans::plus_plus(set, k, rng)
                .ok_or_else(|| Error::DegenerateData(format!("could not seed {k} distinct centers")))?;
            (set.clone(), c)
        }
    };
    let assign = kmeans::lloyd(&sub, &mut centers, KMEANS_ITERS);

    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * dim];
    for (x, &c) in sub.rows().zip(&assign) {
        counts[c] += 1;
        for d in 0..dim {
            sums[c * dim + d] += x[d];
        }
    }
    let mut means = centers;
    let mut variances = vec![0.0; k * dim];
    for c in 0..k {
        if counts[c] > 0 {
            for d in 0..dim {
                means[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
            }
        }
    }
    for (x, &c) in sub.rows().zip(&assign) {
        for d in 0..dim {
            let e = x[d] - means[c * dim + d];
            variances[c * dim + d] += e * e;
        }
    }
    for c in 0..k {
        for d in 0..dim {
            let v = &mut variances[c * dim + d];
            *v = if counts[c] >= 2 {
                (*v / counts[c] as f64).max(floor[d])
            } else {
                reset_var[d]
            };
        }
    }
    let mass: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let weights = project_weights(&mass, WEIGHT_FLOOR);
    GaussianMixture::new(weights, means, variances)
}

#[derive(Debug, Clone)]
struct Stats {
    ll_sum: f64,
    mass: Vec<f64>,
    // sums of gamma * (x - center) and gamma * (x - center)^2
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Stats {
    fn zeros(k: usize, dim: usize) -> Self {
        Self {
            ll_sum: 0.0,
            mass: vec![0.0; k],
            first: vec![0.0; k * dim],
            second: vec![0.0; k * dim],
        }
    }

    fn add(&mut self, other: &Stats) {
        self.ll_sum += other.ll_sum;
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a += b;
        }
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
    }

    fn mean_log_likelihood(&self, t: usize) -> f64 {
        self.ll_sum / t as f64
    }
}

fn e_step(model: &GaussianMixture, set: &DescriptorSet, center: &[f64]) -> Stats {
    let k = model.components();
    let dim = model.dim();
    let partials: Vec<Stats> = set
        .as_slice()
        .par_chunks(CHUNK_ROWS * dim)
        .map(|chunk| {
            let mut s = Stats::zeros(k, dim);
            let mut gamma = vec![0.0; k];
            let mut centered = vec![0.0; dim];
            for x in chunk.chunks_exact(dim) {
                s.ll_sum += model.posteriors_into(x, &mut gamma);
                for d in 0..dim {
                    centered[d] = x[d] - center[d];
                }
                for (c, &g) in gamma.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    s.mass[c] += g;
                    let f = &mut s.first[c * dim..(c + 1) * dim];
                    for d in 0..dim {
                        f[d] += g * centered[d];
                    }
                    let q = &mut s.second[c * dim..(c + 1) * dim];
                    for d in 0..dim {
                        q[d] += g * centered[d] * centered[d];
                    }
                }
            }
            s
        })
        .collect();
    let mut total = Stats::zeros(k, dim);
    for p in &partials {
        total.add(p);
    }
    total
}

fn m_step(
    model: &GaussianMixture,
    stats: &Stats,
    set: &DescriptorSet,
    center: &[f64],
    floor: &[f64],
    reset_var: &[f64],
) -> Result<(GaussianMixture, bool)> {
    let k = model.components();
    let dim = model.dim();
    let mut means = vec![0.0; k * dim];
    let mut variances = vec![0.0; k * dim];
    let mut mass = stats.mass.clone();
    let mut starved = Vec::new();

    for c in 0..k {
        let n = stats.mass[c];
        if n < STARVED_MASS {
            starved.push(c);
            continue;
        }
        for d in 0..dim {
            let i = c * dim + d;
            let shift = stats.first[i] / n;
            means[i] = center[d] + shift;
            variances[i] = (stats.second[i] / n - shift * shift).max(floor[d]);
        }
    }

    if !starved.is_empty() {
        // re-seed on the descriptors the current model explains worst
        let mut gamma = vec![0.0; k];
        let mut worst: Vec<(f64, usize)> = set
            .rows()
            .enumerate()
            .map(|(t, x)| {
                model.posteriors_into(x, &mut gamma);
                (gamma.iter().copied().fold(0.0, f64::max), t)
            })
            .collect();
        worst.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (&c, &(_, t)) in starved.iter().zip(&worst) {
            log::warn!("em: component {c} starved; re-seeding at descriptor {t}");
            means[c * dim..(c + 1) * dim].copy_from_slice(set.row(t));
            variances[c * dim..(c + 1) * dim].copy_from_slice(reset_var);
            mass[c] = 0.0;
        }
    }

    let weights = project_weights(&mass, WEIGHT_FLOOR);
    Ok((GaussianMixture::new(weights, means, variances)?, !starved.is_empty()))
}

/// Maximizes `sum_k mass_k ln w_k` over the simplex with `w_k >= floor`.
///
/// Components whose proportional share would fall under the floor are pinned
/// to it and the rest split the remaining budget in proportion to their mass.
pub(crate) fn project_weights(mass: &[f64], floor: f64) -> Vec<f64> {
    let k = mass.len();
    let mut pinned = vec![false; k];
    loop {
        let free: f64 = mass.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(m, _)| *m).sum();
        let budget = 1.0 - floor * pinned.iter().filter(|p| **p).count() as f64;
        let weights: Vec<f64> = mass
            .iter()
            .zip(&pinned)
            .map(|(m, p)| if *p { floor } else { m * budget / free })
            .collect();
        let mut changed = false;
        for c in 0..k {
            if !pinned[c] && weights[c] < floor {
                pinned[c] = true;
                changed = true;
            }
        }
        if !changed {
            let total: f64 = weights.iter().sum();
            return weights.iter().map(|w| w / total).collect();
        }
    }
}
