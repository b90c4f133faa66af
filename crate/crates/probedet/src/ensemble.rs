//! Bagging over any base learner plus seeded random-search hyperparameter
//! tuning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::eval;
use crate::learners::{
    self, ForestParams, GnbParams, KnnParams, KnnWeights, LearnerError, LearnerSpec,
    LogRegParams, SvmKernel, SvmParams, TrainedLearner, TreeParams,
};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("fraction {name}={value} outside (0, 1]")]
    BadFraction { name: &'static str, value: f64 },
    #[error("n_estimators must be at least 1")]
    NoMembers,
    #[error("member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: LearnerError,
    },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("search space is empty or budget is 0")]
    EmptySearch,
    #[error("unknown hyperparameter {0:?} for base kind {1:?}")]
    UnknownParam(String, String),
    #[error("bad value for hyperparameter {0:?}")]
    BadParamValue(String),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BaggingSpec {
    pub base: LearnerSpec,
    pub n_estimators: usize,
    pub max_samples: f64,
    pub max_features: f64,
    pub bootstrap: bool,
    pub bootstrap_features: bool,
}

impl Default for BaggingSpec {
    fn default() -> Self {
        BaggingSpec {
            base: LearnerSpec::Knn(KnnParams::default()),
            n_estimators: 10,
            max_samples: 1.0,
            max_features: 1.0,
            bootstrap: true,
            bootstrap_features: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaggingMember {
    pub learner: TrainedLearner,
    /// Column indices this member was trained on (and predicts from).
    pub features: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaggingModel {
    pub spec: BaggingSpec,
    pub n_features: usize,
    pub members: Vec<BaggingMember>,
}

fn sample_indices(rng: &mut ChaCha8Rng, n: usize, m: usize, with_replacement: bool) -> Vec<usize> {
    if with_replacement {
        (0..m).map(|_| rng.gen_range(0..n)).collect()
    } else if m >= n {
        // no subsampling requested: keep the original order so the member
        // sees exactly the bare training set
        (0..n).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(rng);
        all.truncate(m);
        all.sort_unstable();
        all
    }
}

pub fn fit_bagging(
    x: &[Vec<f64>],
    y: &[u8],
    spec: &BaggingSpec,
    seed: u64,
) -> Result<BaggingModel, EnsembleError> {
    for (name, value) in [("max_samples", spec.max_samples), ("max_features", spec.max_features)] {
        if !(value > 0.0 && value <= 1.0) {
            return Err(EnsembleError::BadFraction { name, value });
        }
    }
    if spec.n_estimators == 0 {
        return Err(EnsembleError::NoMembers);
    }
    if x.is_empty() {
        return Err(LearnerError::EmptyTrainingSet.into());
    }
    let n = x.len();
    let d = x[0].len();
    let m_rows = ((spec.max_samples * n as f64).ceil() as usize).clamp(1, n);
    let m_feats = ((spec.max_features * d as f64).ceil() as usize).clamp(1, d);
    let mut members = Vec::with_capacity(spec.n_estimators);
    for mi in 0..spec.n_estimators {
        let member_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(mi as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(member_seed);
        let rows = sample_indices(&mut rng, n, m_rows, spec.bootstrap);
        let features = sample_indices(&mut rng, d, m_feats, spec.bootstrap_features);
        let sub_x: Vec<Vec<f64>> =
            rows.iter().map(|&r| features.iter().map(|&f| x[r][f]).collect()).collect();
        let sub_y: Vec<u8> = rows.iter().map(|&r| y[r]).collect();
        let learner = learners::fit(&spec.base, &sub_x, &sub_y, member_seed)
            .map_err(|source| EnsembleError::Member { member: mi, source })?;
        members.push(BaggingMember { learner, features, rows });
    }
    Ok(BaggingModel { spec: spec.clone(), n_features: d, members })
}

impl BaggingModel {
    /// Arithmetic mean of member probabilities, each member seeing only its
    /// own feature mask.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, EnsembleError> {
        for row in x {
            if row.len() != self.n_features {
                return Err(LearnerError::SchemaMismatch {
                    expected: self.n_features,
                    got: row.len(),
                }
                .into());
            }
        }
        let mut acc = vec![[0.0f64; 2]; x.len()];
        for member in &self.members {
            let proj: Vec<Vec<f64>> =
                x.iter().map(|r| member.features.iter().map(|&f| r[f]).collect()).collect();
            let probs = member.learner.predict_proba(&proj)?;
            for (a, p) in acc.iter_mut().zip(probs) {
                a[0] += p[0];
                a[1] += p[1];
            }
        }
        let k = self.members.len() as f64;
        for a in &mut acc {
            a[0] /= k;
            a[1] /= k;
        }
        Ok(acc)
    }

    pub fn predict(&self, x: &[Vec<f64>], threshold: f64) -> Result<Vec<u8>, EnsembleError> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| (p[1] >= threshold) as u8).collect())
    }
}

/// One hyperparameter's sampling domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamDomain {
    Continuous { lo: f64, hi: f64 },
    /// Log-uniform sampling for scale parameters like C and gamma.
    LogUniform { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Choice(Vec<Value>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSpace {
    /// One of gnb/logreg/knn/svm/tree/forest/xtrees.
    pub base_kind: String,
    pub params: BTreeMap<String, ParamDomain>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub spec: LearnerSpec,
    pub val_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: LearnerSpec,
    pub best_f1: f64,
    pub trials: Vec<Trial>,
}

fn sampled_value(domain: &ParamDomain, rng: &mut ChaCha8Rng) -> Value {
    match domain {
        ParamDomain::Continuous { lo, hi } => {
            Value::from(if hi > lo { rng.gen_range(*lo..*hi) } else { *lo })
        }
        ParamDomain::LogUniform { lo, hi } => {
            let (llo, lhi) = (lo.ln(), hi.ln());
            Value::from(if lhi > llo { rng.gen_range(llo..lhi).exp() } else { *lo })
        }
        ParamDomain::Integer { lo, hi } => Value::from(rng.gen_range(*lo..=*hi)),
        ParamDomain::Choice(options) => options[rng.gen_range(0..options.len())].clone(),
    }
}

fn as_f64(name: &str, v: &Value) -> Result<f64, EnsembleError> {
    v.as_f64().ok_or_else(|| EnsembleError::BadParamValue(name.to_string()))
}

fn as_usize(name: &str, v: &Value) -> Result<usize, EnsembleError> {
    v.as_u64().map(|u| u as usize).ok_or_else(|| EnsembleError::BadParamValue(name.to_string()))
}

/// Build a LearnerSpec from the kind's defaults plus sampled overrides.
pub fn spec_from_params(
    base_kind: &str,
    params: &BTreeMap<String, Value>,
) -> Result<LearnerSpec, EnsembleError> {
    let unknown = |k: &str| {
        EnsembleError::UnknownParam(k.to_string(), base_kind.to_string())
    };
    match base_kind {
        "gnb" => {
            let mut p = GnbParams::default();
            for (k, v) in params {
                match k.as_str() {
                    "variance_smoothing" => p.variance_smoothing = as_f64(k, v)?,
                    _ => return Err(unknown(k)),
                }
            }
            Ok(LearnerSpec::Gnb(p))
        }
        "logreg" => {
            let mut p = LogRegParams::default();
            for (k, v) in params {
                match k.as_str() {
                    "c" => p.c = as_f64(k, v)?,
                    "l2_penalty" => {
                        p.l2_penalty =
                            v.as_bool().ok_or_else(|| EnsembleError::BadParamValue(k.clone()))?
                    }
                    "max_iter" => p.max_iter = as_usize(k, v)?,
                    "tol" => p.tol = as_f64(k, v)?,
                    _ => return Err(unknown(k)),
                }
            }
            Ok(LearnerSpec::LogReg(p))
        }
        "knn" => {
            let mut p = KnnParams::default();
            for (k, v) in params {
                match k.as_str() {
                    "k" => p.k = as_usize(k, v)?,
                    "p" => p.p = as_f64(k, v)?,
                    "weights" => {
                        p.weights = match v.as_str() {
                            Some("uniform") => KnnWeights::Uniform,
                            Some("distance") => KnnWeights::Distance,
                            _ => return Err(EnsembleError::BadParamValue(k.clone())),
                        }
                    }
                    _ => return Err(unknown(k)),
                }
            }
            Ok(LearnerSpec::Knn(p))
        }
        "svm" => {
            let mut p = SvmParams::default();
            for (k, v) in params {
                match k.as_str() {
                    "c" => p.c = as_f64(k, v)?,
                    "gamma" => p.gamma = as_f64(k, v)?,
                    "degree" => p.degree = as_f64(k, v)?,
                    "kernel" => {
                        p.kernel = match v.as_str() {
                            Some("rbf") => SvmKernel::Rbf,
                            Some("poly") => SvmKernel::Poly,
                            _ => return Err(EnsembleError::BadParamValue(k.clone())),
                        }
                    }
                    "tol" => p.tol = as_f64(k, v)?,
                    "max_passes" => p.max_passes = as_usize(k, v)?,
                    _ => return Err(unknown(k)),
                }
            }
            Ok(LearnerSpec::Svm(p))
        }
        "tree" => {
            let mut p = TreeParams::default();
            for (k, v) in params {
                match k.as_str() {
                    // 0 means unlimited depth
                    "max_depth" => {
                        let d = as_usize(k, v)?;
                        p.max_depth = (d > 0).then_some(d);
                    }
                    "min_leaf" => p.min_leaf = as_usize(k, v)?.max(1),
                    _ => return Err(unknown(k)),
                }
            }
            Ok(LearnerSpec::Tree(p))
        }
        "forest" | "xtrees" => {
            let mut p = ForestParams::default();
            for (k, v) in params {
                match k.as_str() {
                    "n_trees" => p.n_trees = as_usize(k, v)?.max(1),
                    "max_depth" => {
                        let d = as_usize(k, v)?;
                        p.max_depth = (d > 0).then_some(d);
                    }
                    "min_leaf" => p.min_leaf = as_usize(k, v)?.max(1),
                    _ => return Err(unknown(k)),
                }
            }
            Ok(if base_kind == "forest" {
                LearnerSpec::Forest(p)
            } else {
                LearnerSpec::XTrees(p)
            })
        }
        other => Err(EnsembleError::UnknownParam("<kind>".into(), other.to_string())),
    }
}

/// Uniformly sample `budget` specs from the space, fit each on train, score
/// F1 on val, return the argmax (first trial wins ties).
#[allow(clippy::too_many_arguments)]
pub fn random_search_tune(
    space: &SearchSpace,
    budget: usize,
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    seed: u64,
) -> Result<TuneResult, EnsembleError> {
    if budget == 0 {
        return Err(EnsembleError::EmptySearch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(usize, f64)> = None;
    for t in 0..budget {
        let sampled: BTreeMap<String, Value> = space
            .params
            .iter()
            .map(|(k, dom)| (k.clone(), sampled_value(dom, &mut rng)))
            .collect();
        let spec = spec_from_params(&space.base_kind, &sampled)?;
        let fit_seed = seed.wrapping_add(t as u64);
        let val_f1 = match learners::fit(&spec, train_x, train_y, fit_seed) {
            Ok(model) => {
                let pred = model.predict(val_x, 0.5)?;
                eval::metrics(&eval::confusion(val_y, &pred)?).f1
            }
            // an infeasible sample (e.g. k larger than the training set)
            // scores 0 rather than aborting the search
            Err(_) => 0.0,
        };
        if best.is_none_or(|(_, f)| val_f1 > f) {
            best = Some((t, val_f1));
        }
        trials.push(Trial { spec, val_f1 });
    }
    let (bi, bf) = best.expect("budget >= 1");
    Ok(TuneResult { best: trials[bi].spec.clone(), best_f1: bf, trials })
}
