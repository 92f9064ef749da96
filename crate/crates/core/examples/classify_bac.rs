//! Trains the one-vs-rest linear SVM on Fisher vectors and scores it with
//! balanced accuracy on an imbalanced test set.
//!
//!     cargo run --example classify_bac

use fvagg::synth::random_mixture;
use fvagg::{balanced_accuracy, encode_fv, fit_gmm, normalize_fv, train_svm, EmConfig, FisherVector, SvmConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fvagg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let classes = ["common", "rare", "rarer"];
    let sources = classes
        .iter()
        .map(|_| random_mixture(3, 4, &[0.0; 4], 2.0, &mut rng))
        .collect::<fvagg::Result<Vec<_>>>()?;

    let mut pool = sources[0].sample(2000, 0)?;
    for s in &sources[1..] {
        pool.extend(&s.sample(2000, 1)?)?;
    }
    let codebook = fit_gmm(&pool, 6, &EmConfig::default())?;

    let mut seed = 100;
    let mut draw = |counts: [usize; 3]| -> fvagg::Result<(Vec<FisherVector>, Vec<String>)> {
        let mut fvs = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                seed += 1;
                let set = sources[c].sample(150, seed)?;
                fvs.push(normalize_fv(&encode_fv(&codebook, &set)?)?);
                labels.push(classes[c].to_string());
            }
        }
        Ok((fvs, labels))
    };
    let (train_x, train_y) = draw([200, 40, 15])?;
    let (test_x, test_y) = draw([100, 20, 8])?;

    let model = train_svm(&train_x, &train_y, &SvmConfig::default())?;
    let preds = test_x
        .iter()
        .map(|fv| model.predict(fv).map(|(c, _)| c.to_string()))
        .collect::<fvagg::Result<Vec<_>>>()?;

    let class_names: Vec<String> = classes.iter().map(|c| c.to_string()).collect();
    let report = balanced_accuracy(&preds, &test_y, &class_names)?;
    let plain = preds.iter().zip(&test_y).filter(|(p, t)| p == t).count() as f64 / test_y.len() as f64;
    for (c, recall) in class_names.iter().zip(&report.per_class_recall) {
        println!("{c:>8}: recall {recall:?}");
    }
    println!("accuracy {plain:.3}, balanced accuracy {:.3}", report.bac);
    println!("confusion (rows = truth): {:?}", report.confusion);
    Ok(())
}
