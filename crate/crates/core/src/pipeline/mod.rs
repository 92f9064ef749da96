//! End-to-end orchestration: codebook training, encoding, SVM training,
//! evaluation, prediction, and the synthetic decomposition driver.

pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{balanced_accuracy, train_svm_traced, EvalReport, LinearModel};
use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::fisher::{decomposition_experiment, encode_fv, normalize_fv, DecompositionReport, FisherVector};
use crate::formats;
use crate::gmm::{fit_gmm, EmConfig, GaussianMixture};
use crate::pyramid::{pool_scales, ScaleSchedule};
use crate::synth::random_mixture_spec;

pub use config::PipelineConfig;
pub use manifest::{DatasetManifest, ManifestRecord};

pub const CODEBOOK_FILE: &str = "codebook.gmm";
pub const MODEL_FILE: &str = "model.lsv";

/// Loads and pools every configured scale of one record.
pub fn load_image_descriptors(
    manifest: &DatasetManifest,
    record: &ManifestRecord,
    schedule: &ScaleSchedule,
) -> Result<DescriptorSet> {
    let id = &record.image_id;
    let per_scale = manifest
        .scale_files(record, schedule)
        .into_iter()
        .map(|(_, path)| formats::load_descriptors(&path, id))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.for_image(id))?;
    pool_scales(&per_scale, id).map_err(|e| e.for_image(id))
}

/// Pools descriptors from at most `codebook_image_cap` images drawn
/// uniformly without replacement, then thins the pool to
/// `codebook_descriptor_cap` rows if needed. Both draws use `config.seed`.
pub fn sample_codebook_descriptors(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<DescriptorSet> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no records".into()));
    }
    let schedule = config.schedule()?;
    let n = manifest.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut chosen = if config.codebook_image_cap < n {
        index::sample(&mut rng, n, config.codebook_image_cap).into_vec()
    } else {
        (0..n).collect()
    };
    chosen.sort_unstable();

    let sets = chosen
        .par_iter()
        .map(|&i| load_image_descriptors(manifest, &manifest.records()[i], &schedule))
        .collect::<Result<Vec<_>>>()?;
    let mut pooled = DescriptorSet::empty("codebook", sets[0].dim())?;
    for s in &sets {
        pooled.extend(s).map_err(|e| e.for_image(s.image_id()))?;
    }
    if pooled.len() > config.codebook_descriptor_cap {
        let mut rows = index::sample(&mut rng, pooled.len(), config.codebook_descriptor_cap).into_vec();
        rows.sort_unstable();
        pooled = pooled.select(&rows);
    }
    log::info!(
        "codebook sample: {} descriptors from {} images",
        pooled.len(),
        chosen.len()
    );
    Ok(pooled)
}

pub fn fit_codebook(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<GaussianMixture> {
    config.validate()?;
    let sample = sample_codebook_descriptors(manifest, config)?;
    fit_gmm(&sample, config.components, &config.em)
}

/// Normalized Fisher vector of every record, in manifest order.
pub fn encode_manifest(
    manifest: &DatasetManifest,
    gmm: &GaussianMixture,
    config: &PipelineConfig,
) -> Result<Vec<FisherVector>> {
    let schedule = config.schedule()?;
    manifest
        .records()
        .par_iter()
        .map(|r| {
            let set = load_image_descriptors(manifest, r, &schedule)?;
            encode_fv(gmm, &set)
                .and_then(|fv| normalize_fv(&fv))
                .map_err(|e| e.for_image(&r.image_id))
        })
        .collect()
}

pub fn run_train_codebook(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    out: impl AsRef<Path>,
) -> Result<GaussianMixture> {
    let gmm = fit_codebook(manifest, config)?;
    formats::save_gmm(out, &gmm)?;
    Ok(gmm)
}

/// Writes `<out_dir>/<image_id>.fvv` for every record.
pub fn run_encode(
    manifest: &DatasetManifest,
    gmm: &GaussianMixture,
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let fvs = encode_manifest(manifest, gmm, config)?;
    let mut paths = Vec::with_capacity(fvs.len());
    for (r, fv) in manifest.records().iter().zip(&fvs) {
        let path = out_dir.join(format!("{}.{}", r.image_id, formats::FV_EXTENSION));
        formats::save_fv(&path, fv)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainArtifacts {
    pub gmm_path: PathBuf,
    pub model_path: PathBuf,
}

/// Fits the codebook (unless `codebook` is given), encodes every training
/// image, trains the SVM, and writes `codebook.gmm` and `model.lsv` into
/// `out_dir`.
pub fn run_train(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    codebook: Option<GaussianMixture>,
    out_dir: impl AsRef<Path>,
) -> Result<TrainArtifacts> {
    config.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyInput("training manifest has no records".into()));
    }
    manifest.check_labels(&config.classes)?;
    let labels = manifest.require_labels()?;

    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let gmm = match codebook {
        Some(g) => g,
        None => fit_codebook(manifest, config)?,
    };
    let fvs = encode_manifest(manifest, &gmm, config)?;
    let report = train_svm_traced(&fvs, &labels, &config.classes, &config.svm)?;

    let artifacts = TrainArtifacts {
        gmm_path: out_dir.join(CODEBOOK_FILE),
        model_path: out_dir.join(MODEL_FILE),
    };
    formats::save_gmm(&artifacts.gmm_path, &gmm)?;
    formats::save_model(&artifacts.model_path, &report.model)?;
    Ok(artifacts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub class: String,
    pub scores: Vec<f64>,
}

fn check_compatible(gmm: &GaussianMixture, model: &LinearModel) -> Result<()> {
    let expected = crate::fisher::fv_dim(gmm.components(), gmm.dim());
    if expected != model.dim() {
        return Err(Error::Shape(format!(
            "codebook encodes to {expected} values but the model expects {}",
            model.dim()
        )));
    }
    Ok(())
}

pub fn run_predict(
    manifest: &DatasetManifest,
    gmm: &GaussianMixture,
    model: &LinearModel,
    config: &PipelineConfig,
) -> Result<Vec<Prediction>> {
    check_compatible(gmm, model)?;
    let fvs = encode_manifest(manifest, gmm, config)?;
    manifest
        .records()
        .iter()
        .zip(&fvs)
        .map(|(r, fv)| {
            let (class, scores) = model.predict(fv).map_err(|e| e.for_image(&r.image_id))?;
            Ok(Prediction {
                image_id: r.image_id.clone(),
                class: class.to_string(),
                scores,
            })
        })
        .collect()
}

/// Encodes and classifies every labeled record and scores the predictions.
pub fn run_evaluate(
    manifest: &DatasetManifest,
    gmm: &GaussianMixture,
    model: &LinearModel,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("evaluation manifest has no records".into()));
    }
    manifest.check_labels(model.classes())?;
    let truth = manifest.require_labels()?;
    let preds = run_predict(manifest, gmm, model, config)?;
    let pred_labels: Vec<&str> = preds.iter().map(|p| p.class.as_str()).collect();
    balanced_accuracy(&pred_labels, &truth, model.classes())
}

/// File-based form of [`run_evaluate`].
pub fn run_evaluate_files(
    manifest: &DatasetManifest,
    gmm_path: impl AsRef<Path>,
    model_path: impl AsRef<Path>,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let gmm = formats::load_gmm(gmm_path)?;
    let model = formats::load_model(model_path)?;
    run_evaluate(manifest, &gmm, &model, config)
}

/// Settings for [`run_synth_decomposition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthDecompositionConfig {
    pub dim: usize,
    pub foreground_components: usize,
    pub background_components: usize,
    /// Distance between foreground and background centres along each axis.
    pub separation: f64,
    /// Foreground proportion.
    pub w: f64,
    pub n: usize,
    pub codebook_components: usize,
    pub seed: u64,
    pub em: EmConfig,
}

impl Default for SynthDecompositionConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            foreground_components: 2,
            background_components: 3,
            separation: 6.0,
            w: 0.7,
            n: 10_000,
            codebook_components: 8,
            seed: 0,
            em: EmConfig::default(),
        }
    }
}

/// Builds random foreground/background mixtures, fits a codebook on an
/// independent mixture sample, and runs the decomposition experiment.
pub fn run_synth_decomposition(config: &SynthDecompositionConfig) -> Result<DecompositionReport> {
    let spec = random_mixture_spec(
        config.dim,
        config.foreground_components,
        config.background_components,
        config.separation,
        config.w,
        config.seed,
    )?;
    // the codebook sees the full mixture, whatever w is
    let mut codebook_spec = spec.clone();
    if config.w == 0.0 || config.w == 1.0 {
        codebook_spec = crate::fisher::MixtureSpec::new(spec.foreground().clone(), spec.background().clone(), 0.5)?;
    }
    let (train, _) = codebook_spec.sample(config.n, config.seed.wrapping_add(1))?;
    let codebook = fit_gmm(&train, config.codebook_components, &config.em)?;
    decomposition_experiment(&spec, &codebook, config.n, config.seed.wrapping_add(2))
}
