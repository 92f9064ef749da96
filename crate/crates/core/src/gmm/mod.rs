//! Diagonal-covariance Gaussian mixture codebooks.
//!
//! A [`GaussianMixture`] is the reference model against which Fisher vectors
//! are computed. [`fit_gmm`] estimates one by expectation-maximization,
//! seeded with k-means++ and a few Lloyd iterations.

mod em;
pub mod kmeans;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

pub use em::{fit_gmm, fit_gmm_traced, variance_floor, EmConfig, FitReport};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Tolerance on the weight simplex.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// `K` diagonal Gaussians with mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    // log w_k - (D ln 2pi + sum_d ln var_kd) / 2
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
}

impl GaussianMixture {
    /// Builds a mixture from row-major `K x D` means and variances.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidModel("mixture needs at least one component".into()));
        }
        if means.is_empty() || !means.len().is_multiple_of(k) {
            return Err(Error::Shape(format!("{} mean values for {k} components", means.len())));
        }
        let dim = means.len() / k;
        if variances.len() != means.len() {
            return Err(Error::Shape(format!(
                "variances have {} values, means have {}",
                variances.len(),
                means.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidModel(format!("mixing weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidModel(format!("mixing weights sum to {total}")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidModel("non-finite mean".into()));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidModel(format!("variance {v} is not positive")));
        }

        let inv_var: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
        let log_norm = weights
            .iter()
            .zip(variances.chunks_exact(dim))
            .map(|(w, var)| {
                let log_det: f64 = var.iter().map(|v| v.ln()).sum();
                w.ln() - 0.5 * (dim as f64 * LN_2PI + log_det)
            })
            .collect();
        Ok(Self {
            dim,
            weights,
            means,
            variances,
            log_norm,
            inv_var,
        })
    }

    /// Number of components `K`.
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    /// `log(w_k N(x; mu_k, var_k))` for every component, written into `out`.
    pub(crate) fn log_joint_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, slot) in out.iter_mut().enumerate() {
            let mu = self.mean(k);
            let iv = &self.inv_var[k * self.dim..(k + 1) * self.dim];
            let mut quad = 0.0;
            for d in 0..self.dim {
                let diff = x[d] - mu[d];
                quad += diff * diff * iv[d];
            }
            *slot = self.log_norm[k] - 0.5 * quad;
        }
    }

    /// Overwrites `buf` with responsibilities for `x` and returns `log p(x)`.
    pub(crate) fn posteriors_into(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        self.log_joint_into(x, buf);
        let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in buf.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in buf.iter_mut() {
            *v /= sum;
        }
        max + sum.ln()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "point has dimension {}, mixture has {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDescriptor("non-finite point".into()));
        }
        Ok(())
    }

    pub(crate) fn check_set(&self, set: &DescriptorSet) -> Result<()> {
        if set.dim() != self.dim {
            return Err(Error::Shape(format!(
                "descriptors have dimension {}, mixture has {}",
                set.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Soft assignment of `x` to each component, computed in log space.
    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.components()];
        self.posteriors_into(x, &mut out);
        Ok(out)
    }

    /// `log p(x)` under the mixture.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let mut buf = vec![0.0; self.components()];
        self.log_joint_into(x, &mut buf);
        Ok(log_sum_exp(&buf))
    }

    /// Mean log-likelihood `(1/T) sum_t log p(x_t)`.
    ///
    /// Per-row terms are summed in sorted order, so the result does not
    /// depend on the order of the rows at all.
    pub fn log_likelihood(&self, set: &DescriptorSet) -> Result<f64> {
        self.check_set(set)?;
        if set.is_empty() {
            return Err(Error::EmptyInput("log-likelihood of an empty set".into()));
        }
        let mut buf = vec![0.0; self.components()];
        let mut terms: Vec<f64> = set
            .rows()
            .map(|x| {
                self.log_joint_into(x, &mut buf);
                log_sum_exp(&buf)
            })
            .collect();
        terms.sort_by(f64::total_cmp);
        Ok(terms.iter().sum::<f64>() / set.len() as f64)
    }

    /// Draws `n` descriptors: a component by weight, then a diagonal Gaussian.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DescriptorSet> {
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std: Vec<f64> = self.variances.iter().map(|v| v.sqrt()).collect();
        let mut data = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let k = self.pick_component(rng.random::<f64>());
            let mu = self.mean(k);
            let sd = &std[k * self.dim..(k + 1) * self.dim];
            for d in 0..self.dim {
                let z: f64 = rng.sample(StandardNormal);
                data.push(mu[d] + sd[d] * z);
            }
        }
        DescriptorSet::new("sample", self.dim, data)
    }

    fn pick_component(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.components() - 1
    }
}

/// Free-function form of [`GaussianMixture::posteriors`].
pub fn posteriors(gmm: &GaussianMixture, x: &[f64]) -> Result<Vec<f64>> {
    gmm.posteriors(x)
}

/// Free-function form of [`GaussianMixture::log_likelihood`].
pub fn log_likelihood(gmm: &GaussianMixture, descriptors: &DescriptorSet) -> Result<f64> {
    gmm.log_likelihood(descriptors)
}

/// Free-function form of [`GaussianMixture::sample`].
pub fn sample_gmm(gmm: &GaussianMixture, n: usize, seed: u64) -> Result<DescriptorSet> {
    gmm.sample(n, seed)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss(x: f64, mu: f64, var: f64) -> f64 {
        (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GaussianMixture::new(vec![], vec![], vec![]).is_err());
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(GaussianMixture::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn single_component_posterior_is_one() {
        let g = GaussianMixture::new(vec![1.0], vec![3.0, -1.0], vec![2.0, 0.5]).unwrap();
        assert_eq!(g.posteriors(&[100.0, 7.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn symmetric_midpoint_splits_evenly() {
        let g = GaussianMixture::new(vec![0.5, 0.5], vec![-2.0, 2.0], vec![1.5, 1.5]).unwrap();
        let p = g.posteriors(&[0.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn posteriors_match_direct_densities() {
        let g = GaussianMixture::new(vec![0.3, 0.7], vec![0.0, 5.0], vec![1.0, 1.0]).unwrap();
        let a = 0.3 * gauss(1.0, 0.0, 1.0);
        let b = 0.7 * gauss(1.0, 5.0, 1.0);
        let p = g.posteriors(&[1.0]).unwrap();
        assert_relative_eq!(p[0], a / (a + b), max_relative = 1e-12);
        assert_relative_eq!(p[1], b / (a + b), max_relative = 1e-12);
    }

    #[test]
    fn posteriors_survive_far_points() {
        let g = GaussianMixture::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![1e-4, 1e-4]).unwrap();
        // log-densities around -1e8 here; naive evaluation underflows to 0/0
        let p = g.posteriors(&[200.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[1] > 0.999);
    }

    #[test]
    fn posteriors_reject_wrong_dimension() {
        let g = GaussianMixture::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(g.posteriors(&[0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn standard_normal_at_mode() {
        let g = GaussianMixture::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let set = DescriptorSet::new("x", 1, vec![0.0]).unwrap();
        assert_relative_eq!(
            g.log_likelihood(&set).unwrap(),
            -0.5 * (2.0 * std::f64::consts::PI).ln(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn log_likelihood_rejects_mismatch_and_empty() {
        let g = GaussianMixture::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let wrong = DescriptorSet::new("x", 2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(g.log_likelihood(&wrong), Err(Error::Shape(_))));
        let empty = DescriptorSet::empty("x", 1).unwrap();
        assert!(matches!(g.log_likelihood(&empty), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn sampling_is_seeded() {
        let g = GaussianMixture::new(vec![0.4, 0.6], vec![0.0, 0.0, 5.0, 5.0], vec![1.0; 4]).unwrap();
        assert_eq!(g.sample(50, 9).unwrap(), g.sample(50, 9).unwrap());
        assert_ne!(g.sample(50, 9).unwrap(), g.sample(50, 10).unwrap());
        assert!(g.sample(0, 1).is_err());
    }

    #[test]
    fn near_degenerate_sample_stays_at_mean() {
        let floor = 1e-8;
        let g = GaussianMixture::new(vec![1.0], vec![2.5, -4.0], vec![floor, floor]).unwrap();
        let s = g.sample(2000, 3).unwrap();
        for row in s.rows() {
            assert!((row[0] - 2.5).abs() <= 6.0 * floor.sqrt());
            assert!((row[1] + 4.0).abs() <= 6.0 * floor.sqrt());
        }
    }

    #[test]
    fn component_frequencies_follow_weights() {
        // 5 sigma of Binomial(1e5, 0.2) is 0.0063; the band is +-0.01
        let g = GaussianMixture::new(vec![0.2, 0.8], vec![-50.0, 50.0], vec![1.0, 1.0]).unwrap();
        let s = g.sample(100_000, 77).unwrap();
        let first = s.rows().filter(|r| r[0] < 0.0).count() as f64 / 100_000.0;
        assert!((0.19..=0.21).contains(&first), "{first}");
    }
}
