//! Files written byte-by-byte the way the descriptor extractor emits them.

use std::path::Path;

use fvagg::pipeline::{self, load_image_descriptors, DatasetManifest};
use fvagg::{encode_fv, GaussianMixture, PipelineConfig, ScaleSchedule};

fn write_fvd(path: &Path, dim: u32, rows: &[[f32; 2]]) {
    let mut b = b"FVD1".to_vec();
    b.extend_from_slice(&dim.to_le_bytes());
    b.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    for r in rows {
        for v in r {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, b).unwrap();
}

fn fixture(dir: &Path) -> DatasetManifest {
    std::fs::create_dir_all(dir.join("desc")).unwrap();
    write_fvd(&dir.join("desc/a_fine.fvd"), 2, &[[0.5, -1.0], [1.5, 2.0]]);
    write_fvd(&dir.join("desc/a_coarse.fvd"), 2, &[[-0.25, 0.75]]);
    write_fvd(&dir.join("desc/a_extra.fvd"), 2, &[[9.0, 9.0]]);
    write_fvd(&dir.join("desc/b_fine.fvd"), 2, &[]);
    write_fvd(&dir.join("desc/b_mid.fvd"), 2, &[[3.0, 1.0]]);
    let manifest = concat!(
        r#"{"image_id": "a", "label": "MEL", "descriptors": {"0": "desc/a_coarse.fvd", "-1": "desc/a_fine.fvd", "2.5": "desc/a_extra.fvd"}}"#,
        "\n\n",
        r#"{"image_id": "b", "label": "NV", "descriptors": {"-1": "desc/b_fine.fvd", "-0.5": "desc/b_mid.fvd"}}"#,
        "\n",
    );
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, manifest).unwrap();
    DatasetManifest::load(&path).unwrap()
}

#[test]
fn descriptors_load_in_schedule_order() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let schedule: ScaleSchedule = "-1,-0.5,0".parse().unwrap();

    let a = load_image_descriptors(&m, &m.records()[0], &schedule).unwrap();
    assert_eq!(a.image_id(), "a");
    assert_eq!(a.as_slice(), &[0.5, -1.0, 1.5, 2.0, -0.25, 0.75]);

    let b = load_image_descriptors(&m, &m.records()[1], &schedule).unwrap();
    assert_eq!(b.as_slice(), &[3.0, 1.0]);
}

#[test]
fn encoding_uses_pooled_rows() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let config = PipelineConfig {
        scales: vec![-1.0, -0.5, 0.0],
        ..Default::default()
    };
    let gmm = GaussianMixture::new(vec![0.5, 0.5], vec![0.0, 0.0, 2.0, 1.0], vec![1.0, 1.0, 0.5, 2.0]).unwrap();
    let fvs = pipeline::encode_manifest(&m, &gmm, &config).unwrap();
    let pooled = load_image_descriptors(&m, &m.records()[0], &config.schedule().unwrap()).unwrap();
    let want = fvagg::normalize_fv(&encode_fv(&gmm, &pooled).unwrap()).unwrap();
    assert_eq!(fvs[0], want);
    assert!(fvs.iter().all(|f| f.dim() == 8 && f.is_normalized()));
}

#[test]
fn malformed_extractor_output_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path());
    let schedule: ScaleSchedule = "-1,0".parse().unwrap();

    // one stray byte after the payload
    let mut bytes = std::fs::read(dir.path().join("desc/a_coarse.fvd")).unwrap();
    bytes.push(0);
    std::fs::write(dir.path().join("desc/a_coarse.fvd"), bytes).unwrap();
    let err = load_image_descriptors(&m, &m.records()[0], &schedule).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("a_coarse.fvd") && msg.contains('a'), "{msg}");
    assert_eq!(err.exit_code(), 2);

    // NaN descriptors
    write_fvd(&dir.path().join("desc/a_coarse.fvd"), 2, &[[f32::NAN, 0.0]]);
    let gmm = GaussianMixture::new(vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let config = PipelineConfig {
        scales: vec![-1.0, 0.0],
        ..Default::default()
    };
    let err = pipeline::encode_manifest(&m, &gmm, &config).unwrap_err();
    assert!(
        matches!(err, fvagg::Error::Image { ref image_id, .. } if image_id == "a"),
        "{err}"
    );
}
