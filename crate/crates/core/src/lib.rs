//! Image-level classification by aggregating local descriptors.
//!
//! Local descriptors (for example the spatial cells of a CNN feature map,
//! harvested at several image scales) are pooled per image, encoded as an
//! improved Fisher vector against a diagonal GMM codebook, and classified
//! with a one-vs-rest linear SVM. Results are scored by balanced accuracy.
//!
//! ```
//! use fvagg::{encode_fv, fit_gmm, normalize_fv, EmConfig, GaussianMixture};
//!
//! let truth = GaussianMixture::new(vec![0.5, 0.5], vec![-3.0, 3.0], vec![1.0, 1.0])?;
//! let descriptors = truth.sample(500, 7)?;
//! let codebook = fit_gmm(&descriptors, 2, &EmConfig::default())?;
//! let fv = normalize_fv(&encode_fv(&codebook, &descriptors)?)?;
//! assert_eq!(fv.dim(), 2 * 2 * 1);
//! # Ok::<(), fvagg::Error>(())
//! ```

pub mod classifier;
pub mod descriptor;
pub mod error;
pub mod fisher;
pub mod formats;
pub mod gmm;
pub mod pipeline;
pub mod pyramid;
pub mod synth;

pub use classifier::{balanced_accuracy, predict, train_svm, EvalReport, LinearModel, SvmConfig};
pub use descriptor::DescriptorSet;
pub use error::{Error, Result};
pub use fisher::{
    decomposition_experiment, encode_fv, fv_dim, normalize_fv, DecompositionReport, FisherVector, MixtureSpec,
};
pub use gmm::{fit_gmm, log_likelihood, posteriors, sample_gmm, EmConfig, GaussianMixture};
pub use pipeline::{DatasetManifest, PipelineConfig};
pub use pyramid::{default_schedule, pool_scales, ScaleSchedule};
