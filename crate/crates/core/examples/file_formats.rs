//! Round-trips every on-disk artifact and shows its size.
//!
//!     cargo run --example file_formats

use fvagg::{encode_fv, formats, normalize_fv, train_svm, GaussianMixture, SvmConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("fvagg-formats");
    std::fs::create_dir_all(&dir)?;

    let gmm = GaussianMixture::new(vec![0.5, 0.5], vec![-1.0, 0.0, 1.0, 0.0], vec![1.0, 0.5, 1.0, 0.5])?;
    let mut desc = gmm.sample(100, 0)?;
    desc.set_image_id("example");

    let fv_a = normalize_fv(&encode_fv(&gmm, &desc)?)?;
    let fv_b = normalize_fv(&encode_fv(
        &gmm,
        &gmm.sample(100, 1)?.select(&(0..50).collect::<Vec<_>>()),
    )?)?;
    let model = train_svm(&[fv_a.clone(), fv_b], &["x", "y"], &SvmConfig::default())?;

    let paths = [
        (dir.join("codebook.gmm"), formats::encode_gmm(&gmm)?),
        (dir.join("example.fvd"), formats::encode_descriptors(&desc)?),
        (dir.join("example.fvv"), formats::encode_fv(&fv_a)?),
        (dir.join("model.lsv"), formats::encode_model(&model)?),
    ];
    for (path, bytes) in &paths {
        std::fs::write(path, bytes)?;
        println!(
            "{:<40} {:>6} bytes, magic {}",
            path.display(),
            bytes.len(),
            String::from_utf8_lossy(&bytes[..4])
        );
    }

    assert_eq!(formats::load_gmm(&paths[0].0)?, gmm);
    let reloaded = formats::load_descriptors(&paths[1].0, "example")?;
    println!(
        "descriptors reloaded: {} x {} (stored as f32)",
        reloaded.len(),
        reloaded.dim()
    );
    let fv = formats::load_fv(&paths[2].0)?;
    println!(
        "fisher vector reloaded: dim {}, normalized {}",
        fv.dim(),
        fv.is_normalized()
    );
    println!("model classes: {:?}", formats::load_model(&paths[3].0)?.classes());
    Ok(())
}
