//! Seeded synthetic generators: random mixtures, foreground/background
//! specs, and labeled multi-scale descriptor datasets written in the
//! pipeline's on-disk formats.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::fisher::MixtureSpec;
use crate::formats;
use crate::gmm::GaussianMixture;
use crate::pipeline::config::DEFAULT_CLASSES;
use crate::pipeline::manifest::{exponent_key, DatasetManifest, ManifestRecord};

/// Mixture with `k` components whose means scatter around `center` with
/// standard deviation `spread`, variances in `[0.5, 1.5)`, and weights
/// bounded away from zero.
pub fn random_mixture<R: Rng>(
    k: usize,
    dim: usize,
    center: &[f64],
    spread: f64,
    rng: &mut R,
) -> Result<GaussianMixture> {
    if center.len() != dim {
        return Err(Error::Shape(format!(
            "center has {} values, dim is {dim}",
            center.len()
        )));
    }
    let raw: Vec<f64> = (0..k).map(|_| 0.5 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let mut means = Vec::with_capacity(k * dim);
    let mut variances = Vec::with_capacity(k * dim);
    for _ in 0..k {
        for c in center {
            let z: f64 = rng.sample(StandardNormal);
            means.push(c + spread * z);
            variances.push(0.5 + rng.random::<f64>());
        }
    }
    GaussianMixture::new(weights, means, variances)
}

/// Foreground and background mixtures centred at `+separation/2` and
/// `-separation/2` along every axis.
pub fn random_mixture_spec(
    dim: usize,
    foreground_components: usize,
    background_components: usize,
    separation: f64,
    w: f64,
    seed: u64,
) -> Result<MixtureSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fg = random_mixture(foreground_components, dim, &vec![separation / 2.0; dim], 1.0, &mut rng)?;
    let bg = random_mixture(background_components, dim, &vec![-separation / 2.0; dim], 1.0, &mut rng)?;
    MixtureSpec::new(fg, bg, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDatasetConfig {
    pub classes: Vec<String>,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Mean descriptor count per image; actual counts vary by +-10%.
    pub descriptors_per_image: usize,
    /// Scale exponents the descriptors are spread over.
    pub scales: Vec<f64>,
    /// Per-image foreground proportion is drawn uniformly from this range.
    pub foreground_range: (f64, f64),
    /// Number of shared foreground prototypes; every class places one
    /// component near each.
    pub foreground_components: usize,
    pub background_components: usize,
    /// Standard deviation of a class's per-component offset from the shared
    /// prototype.
    pub class_shift: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetConfig {
    fn default() -> Self {
        Self {
            classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
            dim: 16,
            train_per_class: 100,
            test_per_class: 30,
            descriptors_per_image: 200,
            scales: vec![-1.0, -0.5, 0.0],
            foreground_range: (0.4, 0.8),
            foreground_components: 4,
            background_components: 3,
            class_shift: 0.75,
            seed: 0,
        }
    }
}

/// One generated image: per-scale descriptor sets in scale order.
#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub image_id: String,
    pub label: String,
    pub train: bool,
    pub scales: Vec<(f64, DescriptorSet)>,
}

/// Class-conditional generators. Class foregrounds are small perturbations of
/// one shared set of prototypes, so a codebook fit on all classes cannot
/// isolate a class in its own components; all classes share one background.
#[derive(Debug, Clone)]
pub struct SyntheticGenerators {
    pub foreground: Vec<GaussianMixture>,
    pub background: GaussianMixture,
}

impl SyntheticDatasetConfig {
    fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 || self.dim == 0 || self.descriptors_per_image < 10 {
            return Err(Error::Config(
                "synthetic dataset needs >= 2 classes, dim >= 1 and >= 10 descriptors per image".into(),
            ));
        }
        if self.scales.is_empty() {
            return Err(Error::Config("synthetic dataset needs at least one scale".into()));
        }
        let (lo, hi) = self.foreground_range;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(Error::Config(format!("bad foreground range {lo}..{hi}")));
        }
        Ok(())
    }

    pub fn generators(&self) -> Result<SyntheticGenerators> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let origin = vec![0.0; self.dim];
        let background = random_mixture(self.background_components, self.dim, &origin, 2.0, &mut rng)?;
        let prototypes = random_mixture(self.foreground_components, self.dim, &origin, 3.0, &mut rng)?;
        let foreground = (0..self.classes.len())
            .map(|_| {
                let raw: Vec<f64> = (0..self.foreground_components)
                    .map(|_| 0.5 + rng.random::<f64>())
                    .collect();
                let total: f64 = raw.iter().sum();
                let weights = raw.iter().map(|w| w / total).collect();
                let means = prototypes
                    .means()
                    .iter()
                    .map(|m| m + self.class_shift * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                GaussianMixture::new(weights, means, prototypes.variances().to_vec())
            })
            .collect::<Result<_>>()?;
        Ok(SyntheticGenerators { foreground, background })
    }

    /// Generates every image, training images first, classes in order.
    pub fn generate(&self) -> Result<Vec<SyntheticImage>> {
        let gens = self.generators()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut images = Vec::new();
        for (train, per_class, prefix) in [
            (true, self.train_per_class, "train"),
            (false, self.test_per_class, "test"),
        ] {
            for (c, label) in self.classes.iter().enumerate() {
                for i in 0..per_class {
                    let image_id = format!("{prefix}_{label}_{i:04}");
                    let scales = self.sample_image(&gens, c, &image_id, &mut rng)?;
                    images.push(SyntheticImage {
                        image_id,
                        label: label.clone(),
                        train,
                        scales,
                    });
                }
            }
        }
        Ok(images)
    }

    fn sample_image(
        &self,
        gens: &SyntheticGenerators,
        class: usize,
        image_id: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(f64, DescriptorSet)>> {
        let base = self.descriptors_per_image as f64;
        let total = (base * (0.9 + 0.2 * rng.random::<f64>())).round() as usize;
        let (lo, hi) = self.foreground_range;
        let w = lo + (hi - lo) * rng.random::<f64>();
        let spec = MixtureSpec::new(gens.foreground[class].clone(), gens.background.clone(), w)?;
        let n_scales = self.scales.len();
        let mut out = Vec::with_capacity(n_scales);
        for (j, &s) in self.scales.iter().enumerate() {
            let n = total / n_scales + usize::from(j < total % n_scales);
            let (mut set, _) = spec.sample(n, rng.random())?;
            set.set_image_id(image_id);
            out.push((s, set));
        }
        Ok(out)
    }
}

/// Paths produced by [`write_synthetic_dataset`].
#[derive(Debug, Clone)]
pub struct SyntheticDatasetFiles {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

/// Writes `descriptors/<image_id>_<k>.fvd` files plus `train.jsonl` and
/// `test.jsonl` manifests under `out_dir`.
pub fn write_synthetic_dataset(
    config: &SyntheticDatasetConfig,
    out_dir: impl AsRef<Path>,
) -> Result<SyntheticDatasetFiles> {
    let out_dir = out_dir.as_ref();
    let desc_dir = out_dir.join("descriptors");
    std::fs::create_dir_all(&desc_dir).map_err(|e| Error::io(&desc_dir, e))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for image in config.generate()? {
        let mut descriptors = std::collections::BTreeMap::new();
        for (j, (s, set)) in image.scales.iter().enumerate() {
            let rel = PathBuf::from("descriptors").join(format!("{}_{j}.fvd", image.image_id));
            formats::save_descriptors(out_dir.join(&rel), set)?;
            descriptors.insert(exponent_key(*s), rel);
        }
        let record = ManifestRecord {
            image_id: image.image_id,
            label: Some(image.label),
            descriptors,
        };
        if image.train {
            train.push(record);
        } else {
            test.push(record);
        }
    }
    let files = SyntheticDatasetFiles {
        train_manifest: out_dir.join("train.jsonl"),
        test_manifest: out_dir.join("test.jsonl"),
    };
    DatasetManifest::new(train, out_dir)?.save(&files.train_manifest)?;
    DatasetManifest::new(test, out_dir)?.save(&files.test_manifest)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let cfg = SyntheticDatasetConfig {
            train_per_class: 2,
            test_per_class: 1,
            ..Default::default()
        };
        let a = cfg.generate().unwrap();
        let b = cfg.generate().unwrap();
        assert_eq!(a.len(), 7 * 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image_id, y.image_id);
            assert_eq!(x.scales.len(), 3);
            for ((s1, d1), (s2, d2)) in x.scales.iter().zip(&y.scales) {
                assert_eq!(s1, s2);
                assert_eq!(d1, d2);
            }
        }
        let total: usize = a[0].scales.iter().map(|(_, d)| d.len()).sum();
        assert!((180..=220).contains(&total), "{total}");
    }

    #[test]
    fn written_dataset_loads() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticDatasetConfig {
            train_per_class: 1,
            test_per_class: 1,
            classes: vec!["a".into(), "b".into()],
            ..Default::default()
        };
        let files = write_synthetic_dataset(&cfg, dir.path()).unwrap();
        let m = DatasetManifest::load(&files.train_manifest).unwrap();
        assert_eq!(m.len(), 2);
        let (s, path) = &m.scale_files(&m.records()[0], &"-1,-0.5,0".parse().unwrap())[0];
        assert_eq!(*s, -1.0);
        let set = formats::load_descriptors(path, "x").unwrap();
        assert_eq!(set.dim(), 16);
    }
}
