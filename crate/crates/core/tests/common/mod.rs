//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's density, posterior or encoding code.

#![allow(dead_code)]

use fvagg::{DescriptorSet, GaussianMixture};
use rand::Rng;
use rand_distr::StandardNormal;

/// Mixture parameters as plain vectors, so oracles can perturb them.
#[derive(Debug, Clone)]
pub struct Params {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Params {
    pub fn of(g: &GaussianMixture) -> Self {
        Self {
            dim: g.dim(),
            weights: g.weights().to_vec(),
            means: g.means().to_vec(),
            variances: g.variances().to_vec(),
        }
    }

    pub fn build(&self) -> GaussianMixture {
        GaussianMixture::new(self.weights.clone(), self.means.clone(), self.variances.clone()).unwrap()
    }
}

/// `(1/T) sum_t ln sum_k w_k N(x_t)` evaluated directly from the density
/// formula, without log-space tricks.
pub fn naive_mean_log_likelihood(p: &Params, set: &DescriptorSet) -> f64 {
    let k = p.weights.len();
    let d = p.dim;
    let mut total = 0.0;
    for x in set.rows() {
        let mut density = 0.0;
        for c in 0..k {
            let mut g = p.weights[c];
            for (j, xj) in x.iter().enumerate() {
                let v = p.variances[c * d + j];
                let diff = xj - p.means[c * d + j];
                g *= (-diff * diff / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
            }
            density += g;
        }
        total += density.ln();
    }
    total / set.len() as f64
}

pub fn random_gmm<R: Rng>(rng: &mut R, k: usize, dim: usize, spread: f64) -> GaussianMixture {
    let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / s).collect();
    let means = (0..k * dim)
        .map(|_| spread * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let variances = (0..k * dim).map(|_| 0.5 + 1.5 * rng.random::<f64>()).collect();
    GaussianMixture::new(weights, means, variances).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Smallest achievable worst-coordinate error between fitted and true means
/// over all component matchings, by enumeration.
pub fn best_match_error(fitted: &GaussianMixture, truth: &GaussianMixture) -> f64 {
    let k = truth.components();
    let d = truth.dim();
    permutations(k)
        .into_iter()
        .map(|perm| {
            (0..k)
                .flat_map(|c| (0..d).map(move |j| (c, j)))
                .map(|(c, j)| (fitted.mean(perm[c])[j] - truth.mean(c)[j]).abs())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}
