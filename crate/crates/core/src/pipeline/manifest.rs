//! JSON Lines dataset manifests.
//!
//! One record per line:
//!
//! ```text
//! {"image_id": "ISIC_0024306", "label": "NV", "descriptors": {"-0.5": "d/ISIC_0024306_m0.5.fvd", "0": "..."}}
//! ```
//!
//! `label` may be omitted or `null` for unlabeled images. Descriptor keys
//! are scale exponents; relative paths resolve against the manifest's
//! directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyramid::ScaleSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image_id: String,
    #[serde(default)]
    pub label: Option<String>,
    pub descriptors: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    records: Vec<ManifestRecord>,
    base_dir: PathBuf,
}

impl DatasetManifest {
    /// Validates `records`; relative descriptor paths will resolve against
    /// `base_dir`.
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            check_image_id(&r.image_id).map_err(|m| Error::InvalidInput(format!("record {i}: {m}")))?;
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate image_id {:?}", r.image_id)));
            }
            for (key, path) in &r.descriptors {
                parse_exponent(key).map_err(|m| Error::InvalidInput(format!("{}: {m}", r.image_id)))?;
                if path.as_os_str().is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "{}: empty descriptor path for scale {key}",
                        r.image_id
                    )));
                }
            }
        }
        Ok(Self {
            records,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            records.push(record);
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(records, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
            writeln!(out, "{line}").unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Checks every present label against `classes`.
    pub fn check_labels(&self, classes: &[String]) -> Result<()> {
        for r in &self.records {
            if let Some(l) = &r.label {
                if !classes.contains(l) {
                    return Err(Error::Label(format!(
                        "{}: label {l:?} is not one of {classes:?}",
                        r.image_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fails listing every record that has no label.
    pub fn require_labels(&self) -> Result<Vec<&str>> {
        let missing: Vec<&str> = self
            .records
            .iter()
            .filter(|r| r.label.is_none())
            .map(|r| r.image_id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Label(format!("unlabeled records: {}", missing.join(", "))));
        }
        Ok(self.records.iter().filter_map(|r| r.label.as_deref()).collect())
    }

    /// The record's descriptor files for scales in `schedule`, in schedule
    /// order, with paths resolved. Scales missing from the record are skipped.
    pub fn scale_files(&self, record: &ManifestRecord, schedule: &ScaleSchedule) -> Vec<(f64, PathBuf)> {
        let mut files: Vec<(usize, f64, PathBuf)> = record
            .descriptors
            .iter()
            .filter_map(|(key, path)| {
                let s = parse_exponent(key).ok()?;
                let pos = schedule.position(s)?;
                Some((pos, s, self.resolve(path)))
            })
            .collect();
        files.sort_by_key(|f| f.0);
        files.into_iter().map(|(_, s, p)| (s, p)).collect()
    }
}

/// Canonical manifest key for a scale exponent.
pub fn exponent_key(s: f64) -> String {
    format!("{s}")
}

fn parse_exponent(key: &str) -> std::result::Result<f64, String> {
    match key.trim().parse::<f64>() {
        Ok(s) if s.is_finite() => Ok(s),
        _ => Err(format!("descriptor key {key:?} is not a scale exponent")),
    }
}

fn check_image_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
        return Err(format!("image_id {id:?} is not usable as a file name"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, label: Option<&str>, keys: &[&str]) -> ManifestRecord {
        ManifestRecord {
            image_id: id.into(),
            label: label.map(String::from),
            descriptors: keys
                .iter()
                .map(|k| (k.to_string(), PathBuf::from(format!("{id}_{k}.fvd"))))
                .collect(),
        }
    }

    #[test]
    fn parses_lines_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(
            &path,
            "{\"image_id\":\"a\",\"label\":\"NV\",\"descriptors\":{\"0\":\"x/a0.fvd\",\"-1\":\"/abs/a.fvd\"}}\n\n\
             {\"image_id\":\"b\",\"descriptors\":{\"0.5\":\"b.fvd\"}}\n",
        )
        .unwrap();
        let m = DatasetManifest::load(&path).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records()[1].label, None);
        let files = m.scale_files(&m.records()[0], &ScaleSchedule::default());
        assert_eq!(files[0], (-1.0, PathBuf::from("/abs/a.fvd")));
        assert_eq!(files[1], (0.0, dir.path().join("x/a0.fvd")));
    }

    #[test]
    fn rejects_bad_records() {
        assert!(DatasetManifest::new(vec![record("a", None, &["0"]), record("a", None, &["0"])], ".").is_err());
        assert!(DatasetManifest::new(vec![record("a/b", None, &["0"])], ".").is_err());
        assert!(DatasetManifest::new(vec![record("a", None, &["big"])], ".").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "{\"image_id\": 3}\n").unwrap();
        let err = DatasetManifest::load(&path).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn label_checks() {
        let m = DatasetManifest::new(
            vec![
                record("a", Some("NV"), &["0"]),
                record("b", None, &["0"]),
                record("c", None, &["0"]),
            ],
            ".",
        )
        .unwrap();
        let err = m.require_labels().unwrap_err().to_string();
        assert!(err.contains("b, c"), "{err}");
        assert!(m.check_labels(&["NV".into(), "MEL".into()]).is_ok());
        assert!(m.check_labels(&["MEL".into(), "BCC".into()]).is_err());
    }

    #[test]
    fn scale_files_follow_schedule_order() {
        let m = DatasetManifest::new(vec![record("a", None, &["1", "-3", "0.5", "0.25"])], "/d").unwrap();
        let files = m.scale_files(&m.records()[0], &ScaleSchedule::default());
        let scales: Vec<f64> = files.iter().map(|f| f.0).collect();
        assert_eq!(scales, vec![-3.0, 0.5, 1.0]);
        assert_eq!(exponent_key(-0.5), "-0.5");
        assert_eq!(exponent_key(0.0), "0");
    }
}
