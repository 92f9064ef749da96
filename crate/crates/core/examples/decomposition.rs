//! Checks that a Fisher vector splits into foreground and background terms
//! weighted by their proportions, over a sweep of foreground fractions.
//!
//!     cargo run --example decomposition

use fvagg::fisher::decomposition_experiment;
use fvagg::gmm::fit_gmm;
use fvagg::synth::random_mixture_spec;
use fvagg::EmConfig;

fn main() -> fvagg::Result<()> {
    let codebook_spec = random_mixture_spec(6, 2, 3, 6.0, 0.5, 11)?;
    let (pool, _) = codebook_spec.sample(20_000, 0)?;
    let codebook = fit_gmm(&pool, 8, &EmConfig::default())?;

    println!(
        "{:>5} {:>8} {:>12} {:>10} {:>10}",
        "w", "w_eff", "residual", "|fg term|", "|bg term|"
    );
    for w in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let spec = random_mixture_spec(6, 2, 3, 6.0, w, 11)?;
        let r = decomposition_experiment(&spec, &codebook, 10_000, 5)?;
        println!(
            "{:>5.2} {:>8.4} {:>12.3e} {:>10.4} {:>10.4}",
            r.w, r.effective_w, r.residual_norm, r.foreground_term_norm, r.background_term_norm
        );
    }
    Ok(())
}
