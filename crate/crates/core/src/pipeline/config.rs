use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::SvmConfig;
use crate::error::{Error, Result};
use crate::gmm::EmConfig;
use crate::pyramid::{ScaleSchedule, DEFAULT_EXPONENTS};

/// The seven ISIC 2018 lesion categories.
pub const DEFAULT_CLASSES: [&str; 7] = ["MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Codebook size `K`.
    pub components: usize,
    /// Maximum number of images whose descriptors train the codebook.
    pub codebook_image_cap: usize,
    /// Maximum number of pooled descriptor rows handed to EM.
    pub codebook_descriptor_cap: usize,
    pub scales: Vec<f64>,
    pub classes: Vec<String>,
    /// Seed for codebook image and descriptor sampling.
    pub seed: u64,
    pub threads: Option<usize>,
    pub em: EmConfig,
    pub svm: SvmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            components: 64,
            codebook_image_cap: 1000,
            codebook_descriptor_cap: 1_000_000,
            scales: DEFAULT_EXPONENTS.to_vec(),
            classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            threads: None,
            em: EmConfig::default(),
            svm: SvmConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads TOML or JSON, chosen by extension (`.json` is JSON, anything
    /// else is tried as TOML first).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let config: Self = if is_json {
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?
        } else {
            match toml::from_str(&text) {
                Ok(c) => c,
                Err(toml_err) => serde_json::from_str(&text).map_err(|_| Error::format(path, toml_err.to_string()))?,
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Config("components must be at least 1".into()));
        }
        if self.codebook_image_cap == 0 || self.codebook_descriptor_cap == 0 {
            return Err(Error::Config("codebook caps must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.classes.len() < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.classes {
            if c.is_empty() || !seen.insert(c) {
                return Err(Error::Config(format!("class name {c:?} is empty or repeated")));
            }
        }
        self.schedule()?;
        self.em.validate()?;
        self.svm.validate()
    }

    pub fn schedule(&self) -> Result<ScaleSchedule> {
        ScaleSchedule::new(self.scales.clone())
    }

    /// Sets the sampling, EM and SVM seeds together.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.em.seed = seed;
        self.svm.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = PipelineConfig::default();
        assert_eq!(c.components, 64);
        assert_eq!(c.codebook_image_cap, 1000);
        assert_eq!(c.classes.len(), 7);
        assert_eq!(c.scales.len(), 9);
        c.validate().unwrap();
    }

    #[test]
    fn loads_toml_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "components = 8\nscales = [-1.0, 0.0]\n[svm]\nepochs = 5\n").unwrap();
        let c = PipelineConfig::load(&t).unwrap();
        assert_eq!(c.components, 8);
        assert_eq!(c.svm.epochs, 5);
        assert_eq!(c.svm.lambda, 1e-4);

        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"components": 4, "em": {"max_iters": 3}}"#).unwrap();
        let c = PipelineConfig::load(&j).unwrap();
        assert_eq!((c.components, c.em.max_iters), (4, 3));

        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "componentz = 3\n").unwrap();
        assert!(PipelineConfig::load(&bad).is_err());
        let unordered = dir.path().join("u.toml");
        std::fs::write(&unordered, "scales = [0.0, -1.0]\n").unwrap();
        assert!(matches!(PipelineConfig::load(&unordered), Err(Error::Config(_))));
    }
}
