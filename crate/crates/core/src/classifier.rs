//! One-vs-rest linear SVM on Fisher vectors and balanced-accuracy evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::FisherVector;

/// Linear scoring model `score_c(x) = w_c . x + b_c`, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    classes: Vec<String>,
    dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl LinearModel {
    /// `weights` is row-major `C x dim`.
    pub fn new(classes: Vec<String>, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        let c = classes.len();
        if c < 2 {
            return Err(Error::InvalidModel(format!("{c} classes; need at least 2")));
        }
        if biases.len() != c {
            return Err(Error::Shape(format!("{} biases for {c} classes", biases.len())));
        }
        if weights.is_empty() || !weights.len().is_multiple_of(c) {
            return Err(Error::Shape(format!("{} weights for {c} classes", weights.len())));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite weight or bias".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = classes.iter().find(|name| !seen.insert(name.as_str())) {
            return Err(Error::InvalidModel(format!("duplicate class {dup:?}")));
        }
        let dim = weights.len() / c;
        Ok(Self {
            classes,
            dim,
            weights,
            biases,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn class_weights(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dim..(c + 1) * self.dim]
    }

    /// Raw scores for every class.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "feature has dimension {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok((0..self.classes.len())
            .map(|c| dot(self.class_weights(c), x) + self.biases[c])
            .collect())
    }

    /// Highest-scoring class (lowest index on ties) and all scores.
    pub fn predict(&self, fv: &FisherVector) -> Result<(&str, Vec<f64>)> {
        let scores = self.scores(fv.values())?;
        let best = argmax(&scores);
        Ok((&self.classes[best], scores))
    }
}

/// Free-function form of [`LinearModel::predict`].
pub fn predict<'m>(model: &'m LinearModel, fv: &FisherVector) -> Result<(&'m str, Vec<f64>)> {
    model.predict(fv)
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    /// L2 regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    /// Number of final epochs whose iterates are averaged.
    pub average_last: usize,
    /// Step-size offset in `eta_t = 1 / (lambda (t + t0))`; `None` means
    /// `1 / lambda`, i.e. a unit initial step.
    pub t0: Option<f64>,
    pub seed: u64,
    /// Weight each sample by `n_total / (C n_class)`.
    pub class_weighting: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 30,
            average_last: 10,
            t0: None,
            seed: 0,
            class_weighting: true,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("svm.lambda must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("svm.epochs must be at least 1".into()));
        }
        if let Some(t0) = self.t0 {
            if !(t0 > 0.0 && t0.is_finite()) {
                return Err(Error::Config("svm.t0 must be positive".into()));
            }
        }
        Ok(())
    }

    fn t0(&self) -> f64 {
        self.t0.unwrap_or(1.0 / self.lambda)
    }
}

/// Trained model plus per-class objective traces.
#[derive(Debug, Clone)]
pub struct SvmReport {
    pub model: LinearModel,
    /// For each class, the regularized weighted hinge objective of the
    /// retained iterate after every epoch.
    pub objective_traces: Vec<Vec<f64>>,
}

/// Trains on normalized Fisher vectors. Classes are ordered by first
/// appearance in `labels`.
pub fn train_svm<S: AsRef<str>>(features: &[FisherVector], labels: &[S], config: &SvmConfig) -> Result<LinearModel> {
    let mut classes: Vec<String> = Vec::new();
    for l in labels {
        if !classes.iter().any(|c| c == l.as_ref()) {
            classes.push(l.as_ref().to_string());
        }
    }
    train_svm_traced(features, labels, &classes, config).map(|r| r.model)
}

/// Trains one binary hinge-loss classifier per entry of `classes`.
pub fn train_svm_traced<S: AsRef<str>>(
    features: &[FisherVector],
    labels: &[S],
    classes: &[String],
    config: &SvmConfig,
) -> Result<SvmReport> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let first = features
        .first()
        .ok_or_else(|| Error::EmptyInput("no training features".into()))?;
    let dim = first.dim();
    for (i, f) in features.iter().enumerate() {
        if f.dim() != dim {
            return Err(Error::Shape(format!(
                "feature {i} has dimension {}, expected {dim}",
                f.dim()
            )));
        }
        if !f.is_normalized() {
            return Err(Error::InvalidInput(format!("feature {i} is not normalized")));
        }
    }
    let label_idx = label_indices(labels, classes)?;
    let mut support = vec![0usize; classes.len()];
    for &l in &label_idx {
        support[l] += 1;
    }
    let present = support.iter().filter(|&&n| n > 0).count();
    if present < 2 {
        return Err(Error::DegenerateLabels(format!(
            "training labels cover {present} class(es); need at least 2"
        )));
    }

    let n = features.len();
    let sample_weight: Vec<f64> = label_idx
        .iter()
        .map(|&l| {
            if config.class_weighting {
                n as f64 / (present as f64 * support[l] as f64)
            } else {
                1.0
            }
        })
        .collect();
    let xs: Vec<&[f64]> = features.iter().map(FisherVector::values).collect();

    let per_class: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..classes.len())
        .into_par_iter()
        .map(|c| {
            let ys: Vec<f64> = label_idx.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            train_binary(&xs, &ys, &sample_weight, dim, c as u64, config)
        })
        .collect();

    let mut weights = Vec::with_capacity(classes.len() * dim);
    let mut biases = Vec::with_capacity(classes.len());
    let mut objective_traces = Vec::with_capacity(classes.len());
    for (w, b, trace) in per_class {
        weights.extend(w);
        biases.push(b);
        objective_traces.push(trace);
    }
    Ok(SvmReport {
        model: LinearModel::new(classes.to_vec(), weights, biases)?,
        objective_traces,
    })
}

fn label_indices<S: AsRef<str>>(labels: &[S], classes: &[String]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            classes
                .iter()
                .position(|c| c == l.as_ref())
                .ok_or_else(|| Error::Label(format!("unknown label {:?}", l.as_ref())))
        })
        .collect()
}

/// Weighted regularized hinge objective
/// `lambda/2 |w|^2 + sum_i s_i max(0, 1 - y_i (w.x_i + b)) / sum_i s_i`.
pub fn hinge_objective(xs: &[&[f64]], ys: &[f64], sample_weight: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let mut loss = 0.0;
    let mut total = 0.0;
    for ((x, y), s) in xs.iter().zip(ys).zip(sample_weight) {
        loss += s * (1.0 - y * (dot(w, x) + b)).max(0.0);
        total += s;
    }
    0.5 * lambda * dot(w, w) + loss / total
}

/// Stochastic subgradient descent on one binary problem.
///
/// Each epoch ends with a candidate iterate (the running average once the
/// averaging window has started, the current iterate before that). The
/// candidate replaces the retained solution only if it lowers the full
/// objective.
fn train_binary(
    xs: &[&[f64]],
    ys: &[f64],
    sample_weight: &[f64],
    dim: usize,
    stream: u64,
    config: &SvmConfig,
) -> (Vec<f64>, f64, Vec<f64>) {
    let lambda = config.lambda;
    let t0 = config.t0();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let mut averaged = 0usize;
    let avg_start = config.epochs.saturating_sub(config.average_last);

    let mut best_w = w.clone();
    let mut best_b = b;
    let mut best_obj = hinge_objective(xs, ys, sample_weight, &w, b, lambda);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut t = 0.0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = 1.0 / (lambda * (t + t0));
            let margin = ys[i] * (dot(&w, xs[i]) + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                let step = eta * sample_weight[i] * ys[i];
                for (v, x) in w.iter_mut().zip(xs[i]) {
                    *v += step * x;
                }
                b += step;
            }
            t += 1.0;
            if epoch >= avg_start {
                averaged += 1;
                let r = 1.0 / averaged as f64;
                for (a, v) in avg_w.iter_mut().zip(&w) {
                    *a += (v - *a) * r;
                }
                avg_b += (b - avg_b) * r;
            }
        }
        let (cand_w, cand_b) = if averaged > 0 { (&avg_w, avg_b) } else { (&w, b) };
        let obj = hinge_objective(xs, ys, sample_weight, cand_w, cand_b, lambda);
        if obj <= best_obj {
            best_obj = obj;
            best_w.clone_from(cand_w);
            best_b = cand_b;
        }
        trace.push(best_obj);
    }
    (best_w, best_b, trace)
}

/// Confusion matrix, per-class recall, and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// `None` for classes with no true samples.
    pub per_class_recall: Vec<Option<f64>>,
    pub bac: f64,
}

/// Mean recall over classes that have at least one true sample.
pub fn balanced_accuracy<S: AsRef<str>, T: AsRef<str>>(
    preds: &[S],
    truth: &[T],
    classes: &[String],
) -> Result<EvalReport> {
    if preds.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("no predictions to evaluate".into()));
    }
    let p = label_indices(preds, classes)?;
    let t = label_indices(truth, classes)?;
    let c = classes.len();
    let mut confusion = vec![vec![0u64; c]; c];
    for (&ti, &pi) in t.iter().zip(&p) {
        confusion[ti][pi] += 1;
    }
    let per_class_recall: Vec<Option<f64>> = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let support: u64 = row.iter().sum();
            (support > 0).then(|| row[i] as f64 / support as f64)
        })
        .collect();
    for (name, r) in classes.iter().zip(&per_class_recall) {
        if r.is_none() {
            log::warn!("class {name:?} has no samples; excluded from balanced accuracy");
        }
    }
    let supported: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
    let bac = supported.iter().sum::<f64>() / supported.len() as f64;
    Ok(EvalReport {
        classes: classes.to_vec(),
        confusion,
        per_class_recall,
        bac,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::normalize_fv;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn blobs(seed: u64) -> (Vec<FisherVector>, Vec<&'static str>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (label, center) in [("pos", 5.0), ("neg", -5.0)] {
            for _ in 0..100 {
                let x: f64 = center + rng.sample::<f64, _>(StandardNormal);
                let y: f64 = center + rng.sample::<f64, _>(StandardNormal);
                let raw = FisherVector::raw(vec![x, y]).unwrap();
                feats.push(normalize_fv(&raw).unwrap());
                labels.push(label);
            }
        }
        (feats, labels)
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        let (feats, labels) = blobs(1);
        let model = train_svm(&feats, &labels, &SvmConfig::default()).unwrap();
        for (f, l) in feats.iter().zip(&labels) {
            assert_eq!(model.predict(f).unwrap().0, *l);
        }
    }

    #[test]
    fn duplicated_training_set_keeps_decisions() {
        let (feats, labels) = blobs(2);
        let a = train_svm(&feats, &labels, &SvmConfig::default()).unwrap();
        let feats2: Vec<_> = feats.iter().chain(&feats).cloned().collect();
        let labels2: Vec<_> = labels.iter().chain(&labels).copied().collect();
        let b = train_svm(&feats2, &labels2, &SvmConfig::default()).unwrap();
        for f in &feats {
            assert_eq!(a.predict(f).unwrap().0, b.predict(f).unwrap().0);
        }
    }

    #[test]
    fn objective_trace_never_increases() {
        let (feats, labels) = blobs(3);
        let classes = names(&["pos", "neg"]);
        let rep = train_svm_traced(&feats, &labels, &classes, &SvmConfig::default()).unwrap();
        for trace in &rep.objective_traces {
            assert_eq!(trace.len(), 30);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-6);
            }
        }
    }

    #[test]
    fn training_errors() {
        let (feats, _) = blobs(4);
        let one = vec!["a"; feats.len()];
        assert!(matches!(
            train_svm(&feats, &one, &SvmConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
        let mut mixed = feats.clone();
        mixed[3] = normalize_fv(&FisherVector::raw(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let labels: Vec<&str> = (0..feats.len()).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        assert!(matches!(
            train_svm(&mixed, &labels, &SvmConfig::default()),
            Err(Error::Shape(_))
        ));
        let raw = vec![
            FisherVector::raw(vec![1.0]).unwrap(),
            FisherVector::raw(vec![2.0]).unwrap(),
        ];
        assert!(train_svm(&raw, &["a", "b"], &SvmConfig::default()).is_err());
    }

    #[test]
    fn zero_model_ties_to_first_class() {
        let m = LinearModel::new(names(&["x", "y", "z"]), vec![0.0; 9], vec![0.0; 3]).unwrap();
        let fv = FisherVector::raw(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.predict(&fv).unwrap().0, "x");
    }

    #[test]
    fn scores_are_dot_products() {
        let m = LinearModel::new(names(&["a", "b"]), vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0], vec![0.5, -2.0]).unwrap();
        let fv = FisherVector::raw(vec![2.0, -1.0, 4.0]).unwrap();
        let (class, scores) = m.predict(&fv).unwrap();
        // 2 - 2 + 12 + 0.5 and -2 - 0.5 + 0 - 2
        assert_eq!(scores, vec![12.5, -4.5]);
        assert_eq!(class, "a");
        assert!(matches!(m.scores(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn model_validation() {
        assert!(LinearModel::new(names(&["a"]), vec![1.0], vec![0.0]).is_err());
        assert!(LinearModel::new(names(&["a", "a"]), vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(LinearModel::new(names(&["a", "b"]), vec![1.0, 1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(LinearModel::new(names(&["a", "b"]), vec![f64::NAN, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn bac_hand_count() {
        let classes = names(&["A", "B"]);
        let r = balanced_accuracy(&["A", "A", "B", "B"], &["A", "A", "A", "B"], &classes).unwrap();
        assert_eq!(r.confusion, vec![vec![2, 1], vec![0, 1]]);
        assert_eq!(r.per_class_recall, vec![Some(2.0 / 3.0), Some(1.0)]);
        assert_eq!(r.bac, (2.0 / 3.0 + 1.0) / 2.0);
    }

    #[test]
    fn bac_perfect_and_majority() {
        let classes = names(&["a", "b", "c", "d", "e", "f", "g"]);
        let truth: Vec<&str> = classes
            .iter()
            .enumerate()
            .flat_map(|(i, c)| std::iter::repeat_n(c.as_str(), if i == 0 { 50 } else { 3 }))
            .collect();
        assert_eq!(balanced_accuracy(&truth, &truth, &classes).unwrap().bac, 1.0);
        let majority = vec!["a"; truth.len()];
        let r = balanced_accuracy(&majority, &truth, &classes).unwrap();
        assert_eq!(r.bac, 1.0 / 7.0);
    }

    #[test]
    fn bac_skips_unsupported_classes_and_rejects_unknown() {
        let classes = names(&["a", "b", "c"]);
        let r = balanced_accuracy(&["a", "c"], &["a", "b"], &classes).unwrap();
        assert_eq!(r.per_class_recall, vec![Some(1.0), Some(0.0), None]);
        assert_eq!(r.bac, 0.5);
        assert!(matches!(
            balanced_accuracy(&["zz"], &["a"], &classes),
            Err(Error::Label(_))
        ));
        assert!(balanced_accuracy::<&str, &str>(&[], &[], &classes).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let classes = names(&["A", "B", "C"]);
        let r = balanced_accuracy(&["A", "B"], &["A", "A"], &classes).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"per_class_recall\":[0.5,null,null]"), "{json}");
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
