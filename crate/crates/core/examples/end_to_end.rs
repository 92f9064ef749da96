//! Writes a synthetic labeled dataset to disk in the extractor's format, then
//! runs the whole pipeline: codebook, encoding, SVM training, evaluation.
//!
//!     cargo run --release --example end_to_end [out_dir]

use std::time::Instant;

use fvagg::pipeline::{run_evaluate, run_train};
use fvagg::synth::{write_synthetic_dataset, SyntheticDatasetConfig};
use fvagg::{formats, DatasetManifest, PipelineConfig};

fn main() -> fvagg::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fvagg-end-to-end"));

    let data = SyntheticDatasetConfig::default();
    let files = write_synthetic_dataset(&data, &out_dir)?;
    println!("dataset written to {}", out_dir.display());

    let config = PipelineConfig {
        components: 16,
        scales: data.scales.clone(),
        ..Default::default()
    };
    let start = Instant::now();
    let train = DatasetManifest::load(&files.train_manifest)?;
    let artifacts = run_train(&train, &config, None, out_dir.join("model"))?;
    println!("trained in {:.1?}", start.elapsed());

    let gmm = formats::load_gmm(&artifacts.gmm_path)?;
    let model = formats::load_model(&artifacts.model_path)?;
    let test = DatasetManifest::load(&files.test_manifest)?;
    let report = run_evaluate(&test, &gmm, &model, &config)?;
    for (c, r) in report.classes.iter().zip(&report.per_class_recall) {
        println!("{c:>6}: {}", r.map_or("n/a".into(), |v| format!("{v:.3}")));
    }
    println!("held-out balanced accuracy {:.4}", report.bac);
    Ok(())
}
