//! From-scratch binary base classifiers with probability outputs: Gaussian
//! naive Bayes, logistic regression, k-nearest neighbors, SMO kernel SVM,
//! and Gini decision trees / forests / extra-trees.
//!
//! Everything is deterministic given (data, spec, seed); probabilities are
//! always two-class rows summing to 1.

pub mod gnb;
pub mod knn;
pub mod logreg;
pub mod svm;
pub mod tree;

pub use gnb::GnbModel;
pub use knn::KnnModel;
pub use logreg::LogRegModel;
pub use svm::SvmModel;
pub use tree::{ForestModel, TreeModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("k={k} exceeds training size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("schema mismatch: model expects {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnnWeights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvmKernel {
    Rbf,
    Poly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbParams {
    pub variance_smoothing: f64,
}

impl Default for GnbParams {
    fn default() -> Self {
        // institutional tuning value
        GnbParams { variance_smoothing: 3.15e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub c: f64,
    /// false disables regularization (the reference configuration); true
    /// uses L2 with strength 1/c.
    pub l2_penalty: bool,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { c: 190.0, l2_penalty: false, max_iter: 200, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub p: f64,
    pub weights: KnnWeights,
    /// Search-tree tuning knob accepted for config compatibility; the
    /// brute-force search ignores it but records the value in the artifact.
    pub leaf_size: Option<u32>,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 3, p: 1.0, weights: KnnWeights::Distance, leaf_size: Some(26) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: SvmKernel,
    pub gamma: f64,
    /// Only used for the poly kernel; stored verbatim otherwise.
    pub degree: f64,
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 47.0, kernel: SvmKernel::Rbf, gamma: 1.64, degree: 4.25, tol: 1e-3, max_passes: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: None, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerSpec {
    Gnb(GnbParams),
    LogReg(LogRegParams),
    Knn(KnnParams),
    Svm(SvmParams),
    Tree(TreeParams),
    Forest(ForestParams),
    XTrees(ForestParams),
}

impl LearnerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LearnerSpec::Gnb(_) => "gnb",
            LearnerSpec::LogReg(_) => "logreg",
            LearnerSpec::Knn(_) => "knn",
            LearnerSpec::Svm(_) => "svm",
            LearnerSpec::Tree(_) => "tree",
            LearnerSpec::Forest(_) => "forest",
            LearnerSpec::XTrees(_) => "xtrees",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelData {
    Gnb(GnbModel),
    LogReg(LogRegModel),
    Knn(KnnModel),
    Svm(SvmModel),
    Tree(TreeModel),
    Forest(ForestModel),
}

/// A fitted learner plus the feature schema it was trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedLearner {
    pub spec: LearnerSpec,
    pub n_features: usize,
    pub feature_names: Option<Vec<String>>,
    pub model: ModelData,
}

impl TrainedLearner {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, LearnerError> {
        for row in x {
            if row.len() != self.n_features {
                return Err(LearnerError::SchemaMismatch {
                    expected: self.n_features,
                    got: row.len(),
                });
            }
        }
        Ok(match &self.model {
            ModelData::Gnb(m) => m.predict_proba(x),
            ModelData::LogReg(m) => m.predict_proba(x),
            ModelData::Knn(m) => m.predict_proba(x),
            ModelData::Svm(m) => m.predict_proba(x),
            ModelData::Tree(m) => m.predict_proba(x),
            ModelData::Forest(m) => m.predict_proba(x),
        })
    }

    pub fn predict(&self, x: &[Vec<f64>], threshold: f64) -> Result<Vec<u8>, LearnerError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| (p[1] >= threshold) as u8)
            .collect())
    }

    /// Normalized impurity-decrease importances; trees and forests only.
    pub fn feature_importances(&self) -> Option<&[f64]> {
        match &self.model {
            ModelData::Tree(m) => Some(&m.importances),
            ModelData::Forest(m) => Some(&m.importances),
            _ => None,
        }
    }

    /// Set by optimizers that hit their iteration budget before `tol`.
    pub fn converged(&self) -> bool {
        match &self.model {
            ModelData::LogReg(m) => m.converged,
            ModelData::Svm(m) => m.converged,
            _ => true,
        }
    }
}

pub fn fit(
    spec: &LearnerSpec,
    x: &[Vec<f64>],
    y: &[u8],
    seed: u64,
) -> Result<TrainedLearner, LearnerError> {
    fit_named(spec, x, y, seed, None)
}

pub fn fit_named(
    spec: &LearnerSpec,
    x: &[Vec<f64>],
    y: &[u8],
    seed: u64,
    feature_names: Option<Vec<String>>,
) -> Result<TrainedLearner, LearnerError> {
    if x.is_empty() {
        return Err(LearnerError::EmptyTrainingSet);
    }
    let n_features = x[0].len();
    let model = match spec {
        LearnerSpec::Gnb(p) => ModelData::Gnb(gnb::fit(x, y, p)),
        LearnerSpec::LogReg(p) => ModelData::LogReg(logreg::fit(x, y, p)),
        LearnerSpec::Knn(p) => ModelData::Knn(knn::fit(x, y, p)?),
        LearnerSpec::Svm(p) => ModelData::Svm(svm::fit(x, y, p, seed)),
        LearnerSpec::Tree(p) => ModelData::Tree(tree::fit_tree(x, y, p, seed)),
        LearnerSpec::Forest(p) => ModelData::Forest(tree::fit_forest(x, y, p, seed, false)),
        LearnerSpec::XTrees(p) => ModelData::Forest(tree::fit_forest(x, y, p, seed, true)),
    };
    Ok(TrainedLearner { spec: spec.clone(), n_features, feature_names, model })
}

pub(crate) fn class_counts(y: &[u8]) -> [usize; 2] {
    let pos = y.iter().filter(|&&v| v != 0).count();
    [y.len() - pos, pos]
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn blobs(n: usize, seed: u64, sep: f64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let center = if label == 1 { sep } else { 0.0 };
            x.push(vec![
                center + rng.gen_range(-1.0..1.0),
                center + rng.gen_range(-1.0..1.0),
            ]);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn probabilities_normalized_for_every_kind() {
        let (x, y) = blobs(60, 3, 3.0);
        let specs = [
            LearnerSpec::Gnb(GnbParams::default()),
            LearnerSpec::LogReg(LogRegParams::default()),
            LearnerSpec::Knn(KnnParams::default()),
            LearnerSpec::Svm(SvmParams { max_passes: 5, ..SvmParams::default() }),
            LearnerSpec::Tree(TreeParams::default()),
            LearnerSpec::Forest(ForestParams { n_trees: 11, ..ForestParams::default() }),
            LearnerSpec::XTrees(ForestParams { n_trees: 11, ..ForestParams::default() }),
        ];
        for spec in &specs {
            let m = fit(spec, &x, &y, 7).unwrap();
            for p in m.predict_proba(&x).unwrap() {
                assert!((p[0] + p[1] - 1.0).abs() < 1e-9, "{spec:?}");
                assert!(p[0] >= 0.0 && p[1] >= 0.0);
            }
        }
    }

    #[test]
    fn determinism_per_seed() {
        let (x, y) = blobs(80, 5, 2.0);
        for spec in [
            LearnerSpec::Svm(SvmParams { max_passes: 5, ..SvmParams::default() }),
            LearnerSpec::Forest(ForestParams { n_trees: 7, ..ForestParams::default() }),
            LearnerSpec::XTrees(ForestParams { n_trees: 7, ..ForestParams::default() }),
        ] {
            let a = fit(&spec, &x, &y, 42).unwrap();
            let b = fit(&spec, &x, &y, 42).unwrap();
            assert_eq!(a.predict_proba(&x).unwrap(), b.predict_proba(&x).unwrap());
        }
    }

    #[test]
    fn schema_mismatch_rejected() {
        let (x, y) = blobs(20, 1, 3.0);
        let m = fit(&LearnerSpec::Gnb(GnbParams::default()), &x, &y, 0).unwrap();
        let bad = vec![vec![1.0, 2.0, 3.0]];
        assert!(matches!(m.predict_proba(&bad), Err(LearnerError::SchemaMismatch { .. })));
    }

    #[test]
    fn model_round_trips_through_json() {
        let (x, y) = blobs(40, 9, 3.0);
        let m = fit(&LearnerSpec::Knn(KnnParams::default()), &x, &y, 0).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: TrainedLearner = serde_json::from_str(&json).unwrap();
        assert_eq!(m.predict_proba(&x).unwrap(), back.predict_proba(&x).unwrap());
    }
}
