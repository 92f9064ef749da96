//! Multi-scale schedule and per-image descriptor pooling.

use std::fmt;
use std::str::FromStr;

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

/// Image rescaling exponents `s`; the factor for each is `2^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSchedule {
    exponents: Vec<f64>,
}

/// Exponents -3, -2.5, ..., 1.
pub const DEFAULT_EXPONENTS: [f64; 9] = [-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0];

impl ScaleSchedule {
    pub fn new(exponents: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::Config("scale schedule is empty".into()));
        }
        if exponents.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("scale exponents must be finite".into()));
        }
        if exponents.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "scale exponents must be strictly increasing: {exponents:?}"
            )));
        }
        Ok(Self { exponents })
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn factors(&self) -> Vec<f64> {
        self.exponents.iter().map(|&s| scale_factor(s)).collect()
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Position of `exponent` in the schedule, matching within 1e-9.
    pub fn position(&self, exponent: f64) -> Option<usize> {
        self.exponents.iter().position(|s| (s - exponent).abs() < 1e-9)
    }
}

impl Default for ScaleSchedule {
    fn default() -> Self {
        default_schedule()
    }
}

pub fn default_schedule() -> ScaleSchedule {
    ScaleSchedule {
        exponents: DEFAULT_EXPONENTS.to_vec(),
    }
}

/// `2^s`, exact for integer and half-integer `s`.
pub fn scale_factor(s: f64) -> f64 {
    let twice = 2.0 * s;
    if twice.fract() == 0.0 && twice.abs() < 2048.0 {
        let whole = s.floor();
        let base = 2f64.powi(whole as i32);
        if s == whole {
            base
        } else {
            base * std::f64::consts::SQRT_2
        }
    } else {
        s.exp2()
    }
}

/// Parses a comma-separated exponent list such as `-1,-0.5,0`.
impl FromStr for ScaleSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let exponents = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad scale exponent {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ScaleSchedule::new(exponents)
    }
}

impl fmt::Display for ScaleSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.exponents.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Row-concatenates per-scale sets in the given order. Empty sets are
/// skipped; a set whose id differs from `image_id` is rejected.
pub fn pool_scales(per_scale: &[DescriptorSet], image_id: &str) -> Result<DescriptorSet> {
    let mut non_empty = per_scale.iter().filter(|s| !s.is_empty());
    let first = non_empty
        .next()
        .ok_or_else(|| Error::EmptyInput(format!("{image_id}: no descriptors at any scale")))?;
    for set in per_scale {
        if set.image_id() != image_id {
            return Err(Error::InvalidInput(format!(
                "scale set for {:?} pooled under {image_id:?}",
                set.image_id()
            )));
        }
    }
    let mut pooled = DescriptorSet::empty(image_id, first.dim())?;
    pooled.extend(first)?;
    for set in non_empty {
        pooled.extend(set).map_err(|e| match e {
            Error::Shape(m) => Error::Shape(format!("{image_id}: {m}")),
            e => e,
        })?;
    }
    Ok(pooled)
}
