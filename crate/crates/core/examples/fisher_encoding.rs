//! Encodes descriptor sets as improved Fisher vectors and compares them.
//!
//!     cargo run --example fisher_encoding

use fvagg::{encode_fv, fit_gmm, fv_dim, normalize_fv, EmConfig, GaussianMixture};

fn main() -> fvagg::Result<()> {
    let source = GaussianMixture::new(vec![0.5, 0.5], vec![-2.0, 0.0, 2.0, 0.0], vec![1.0; 4])?;
    let codebook = fit_gmm(&source.sample(4000, 0)?, 4, &EmConfig::default())?;
    println!(
        "codebook K={} D={} -> Fisher vector length {}",
        codebook.components(),
        codebook.dim(),
        fv_dim(codebook.components(), codebook.dim())
    );

    // images drawn from the codebook's own distribution and from a shifted one
    let shifted = GaussianMixture::new(vec![0.5, 0.5], vec![-1.0, 1.0, 3.0, 1.0], vec![1.0; 4])?;
    let sets = [
        ("matched-a", source.sample(300, 1)?),
        ("matched-b", source.sample(300, 2)?),
        ("shifted", shifted.sample(300, 3)?),
    ];
    let fvs = sets
        .iter()
        .map(|(_, s)| encode_fv(&codebook, s).and_then(|fv| normalize_fv(&fv)))
        .collect::<fvagg::Result<Vec<_>>>()?;

    for ((name, set), fv) in sets.iter().zip(&fvs) {
        let raw = encode_fv(&codebook, set)?;
        println!(
            "{name:>10}: raw norm {:.4}, normalized norm {:.4}",
            raw.norm(),
            fv.norm()
        );
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    println!(
        "cosine(matched-a, matched-b) = {:.3}",
        dot(fvs[0].values(), fvs[1].values())
    );
    println!(
        "cosine(matched-a, shifted)   = {:.3}",
        dot(fvs[0].values(), fvs[2].values())
    );
    Ok(())
}
