//! Fits a diagonal GMM codebook to sampled descriptors and prints the EM trace.
//!
//!     cargo run --example fit_codebook

use fvagg::gmm::fit_gmm_traced;
use fvagg::{EmConfig, GaussianMixture};

fn main() -> fvagg::Result<()> {
    let truth = GaussianMixture::new(vec![0.3, 0.3, 0.4], vec![0.0, 0.0, 8.0, 0.0, 0.0, 8.0], vec![0.5; 6])?;
    let descriptors = truth.sample(5000, 1)?;

    let report = fit_gmm_traced(&descriptors, 3, &EmConfig::default())?;
    println!("converged: {} after {} iterations", report.converged, report.iterations);
    for (i, ll) in report.log_likelihood_trace.iter().enumerate().take(8) {
        println!("  iter {i:>2}: mean log-likelihood {ll:.6}");
    }
    let g = &report.model;
    for k in 0..g.components() {
        println!(
            "component {k}: weight {:.3}, mean {:?}, variance {:?}",
            g.weights()[k],
            g.mean(k).iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            g.variance(k).iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
        );
    }
    Ok(())
}
