//! Hybrid feature selection: four filter scorers, union, pairwise
//! correlation pruning, then a genetic-algorithm wrapper around a forest
//! estimator.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval;
use crate::learners::tree::{self, ForestModel};
use crate::learners::ForestParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsetStage {
    Filter,
    Pruned,
    Wrapped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub names: Vec<String>,
    pub stage: SubsetStage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrunedPair {
    pub kept: String,
    pub dropped: String,
    pub corr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub feature_names: Vec<String>,
    pub target_corr: Vec<f64>,
    pub chi2: Vec<f64>,
    pub anova_f: Vec<f64>,
    pub tree_importance: Vec<f64>,
    pub union_size: usize,
    pub pruned: Vec<PrunedPair>,
    /// Best fitness after each GA generation (index 0 = initial population).
    pub ga_best_fitness: Vec<f64>,
}

fn column(x: &[Vec<f64>], j: usize) -> Vec<f64> {
    x.iter().map(|r| r[j]).collect()
}

/// Pearson correlation; zero-variance inputs score 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va.sqrt() * vb.sqrt())
    }
}

pub fn target_correlations(x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    (0..x[0].len()).map(|j| pearson(&column(x, j), &yf)).collect()
}

pub fn target_correlation_select(
    x: &[Vec<f64>],
    y: &[u8],
    names: &[String],
    threshold: f64,
) -> FeatureSubset {
    let corr = target_correlations(x, y);
    let kept = names
        .iter()
        .zip(&corr)
        .filter(|(_, c)| c.abs() >= threshold)
        .map(|(n, _)| n.clone())
        .collect();
    FeatureSubset { names: kept, stage: SubsetStage::Filter }
}

/// Chi-square between each min-max-scaled feature and the class, from the
/// observed-vs-expected per-class feature sums.
pub fn chi_square_scores(x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len();
    let n_pos = y.iter().filter(|&&v| v != 0).count();
    let shares = [(n - n_pos) as f64 / n as f64, n_pos as f64 / n as f64];
    (0..d)
        .map(|j| {
            let col = column(x, j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let scaled: Vec<f64> = if hi > lo {
                col.iter().map(|v| (v - lo) / (hi - lo)).collect()
            } else {
                vec![0.0; n]
            };
            let total: f64 = scaled.iter().sum();
            if total == 0.0 {
                return 0.0;
            }
            let mut observed = [0.0f64; 2];
            for (v, &label) in scaled.iter().zip(y) {
                observed[(label != 0) as usize] += v;
            }
            let mut score = 0.0;
            for c in 0..2 {
                let expected = shares[c] * total;
                if expected > 0.0 {
                    score += (observed[c] - expected).powi(2) / expected;
                }
            }
            score
        })
        .collect()
}

/// One-way ANOVA F statistic per feature over the two classes.
pub fn anova_f_scores(x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len();
    let n_pos = y.iter().filter(|&&v| v != 0).count();
    let n_neg = n - n_pos;
    assert!(n_pos > 0 && n_neg > 0, "ANOVA needs both classes");
    (0..d)
        .map(|j| {
            let col = column(x, j);
            let grand = col.iter().sum::<f64>() / n as f64;
            let mut sums = [0.0f64; 2];
            for (v, &label) in col.iter().zip(y) {
                sums[(label != 0) as usize] += v;
            }
            let means = [sums[0] / n_neg as f64, sums[1] / n_pos as f64];
            let between = n_neg as f64 * (means[0] - grand).powi(2)
                + n_pos as f64 * (means[1] - grand).powi(2);
            let mut within = 0.0;
            for (v, &label) in col.iter().zip(y) {
                within += (v - means[(label != 0) as usize]).powi(2);
            }
            let msb = between; // k - 1 = 1
            let msw = within / (n - 2) as f64;
            if msw == 0.0 {
                if msb == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                msb / msw
            }
        })
        .collect()
}

/// Normalized impurity-decrease importances from an extremely randomized
/// forest.
pub fn tree_importance_scores(x: &[Vec<f64>], y: &[u8], n_trees: usize, seed: u64) -> Vec<f64> {
    let params = ForestParams { n_trees, ..Default::default() };
    tree::fit_forest(x, y, &params, seed, true).importances
}

/// Names of the k highest-scoring features; ties keep earlier columns.
pub fn top_k(scores: &[f64], names: &[String], k: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable(); // restore source column order
    order.into_iter().map(|i| names[i].clone()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub corr_threshold: f64,
    pub top_k: usize,
    pub n_trees: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { corr_threshold: 0.3, top_k: 25, n_trees: 100 }
    }
}

/// Union of the four scorers' picks, in source column order.
pub fn filter_select(
    x: &[Vec<f64>],
    y: &[u8],
    names: &[String],
    cfg: &FilterConfig,
    seed: u64,
) -> (FeatureSubset, SelectionReport) {
    let target_corr = target_correlations(x, y);
    let chi2 = chi_square_scores(x, y);
    let anova_f = anova_f_scores(x, y);
    let tree_importance = tree_importance_scores(x, y, cfg.n_trees, seed);
    let mut picks: Vec<Vec<String>> = vec![
        names
            .iter()
            .zip(&target_corr)
            .filter(|(_, c)| c.abs() >= cfg.corr_threshold)
            .map(|(n, _)| n.clone())
            .collect(),
        top_k(&chi2, names, cfg.top_k),
        top_k(&anova_f, names, cfg.top_k),
        top_k(&tree_importance, names, cfg.top_k),
    ];
    let mut union: Vec<String> = Vec::new();
    for name in names {
        if picks.iter_mut().any(|p| p.contains(name)) && !union.contains(name) {
            union.push(name.clone());
        }
    }
    let report = SelectionReport {
        feature_names: names.to_vec(),
        target_corr,
        chi2,
        anova_f,
        tree_importance,
        union_size: union.len(),
        pruned: Vec::new(),
        ga_best_fitness: Vec::new(),
    };
    (FeatureSubset { names: union, stage: SubsetStage::Filter }, report)
}

/// Greedily break up all pairs with |corr| > threshold, keeping the member
/// with the stronger target correlation (tie: keep the earlier column).
pub fn correlation_prune(
    x: &[Vec<f64>],
    y: &[u8],
    names: &[String],
    subset: &FeatureSubset,
    threshold: f64,
) -> (FeatureSubset, Vec<PrunedPair>) {
    let idx: Vec<usize> = subset
        .names
        .iter()
        .map(|n| names.iter().position(|m| m == n).expect("subset name in table"))
        .collect();
    let cols: Vec<Vec<f64>> = idx.iter().map(|&j| column(x, j)).collect();
    let target = {
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        cols.iter().map(|c| pearson(c, &yf).abs()).collect::<Vec<_>>()
    };
    let m = idx.len();
    let mut alive = vec![true; m];
    let mut pruned = Vec::new();
    loop {
        let mut dropped_any = false;
        'scan: for i in 0..m {
            if !alive[i] {
                continue;
            }
            for j in i + 1..m {
                if !alive[j] {
                    continue;
                }
                let c = pearson(&cols[i], &cols[j]);
                if c.abs() > threshold {
                    // keep the more target-correlated twin; ties drop the
                    // later column
                    let drop = if target[i] < target[j] { i } else { j };
                    let keep = i + j - drop;
                    alive[drop] = false;
                    pruned.push(PrunedPair {
                        kept: subset.names[keep].clone(),
                        dropped: subset.names[drop].clone(),
                        corr: c,
                    });
                    dropped_any = true;
                    break 'scan;
                }
            }
        }
        if !dropped_any {
            break;
        }
    }
    let survivors: Vec<String> = (0..m).filter(|&i| alive[i]).map(|i| subset.names[i].clone()).collect();
    // postcondition: no surviving pair above the threshold
    for i in 0..m {
        for j in i + 1..m {
            if alive[i] && alive[j] {
                assert!(pearson(&cols[i], &cols[j]).abs() <= threshold);
            }
        }
    }
    (FeatureSubset { names: survivors, stage: SubsetStage::Pruned }, pruned)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub generations: usize,
    pub population: usize,
    pub tournament: usize,
    pub crossover_p: f64,
    pub elitism: usize,
    pub estimator: ForestParams,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            generations: 50,
            population: 50,
            tournament: 3,
            crossover_p: 0.5,
            elitism: 1,
            estimator: ForestParams::default(),
        }
    }
}

/// Fitness orders by validation F1, then by fewer features, then by mask.
#[derive(Clone, PartialEq)]
struct Scored {
    mask: Vec<bool>,
    f1: f64,
}

impl Scored {
    fn bits(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
    fn better_than(&self, other: &Scored) -> bool {
        self.f1
            .total_cmp(&other.f1)
            .then(other.bits().cmp(&self.bits()))
            .then_with(|| other.mask.cmp(&self.mask))
            .is_gt()
    }
}

fn repair(mask: &mut [bool], rng: &mut ChaCha8Rng) {
    if mask.iter().all(|&b| !b) {
        let i = rng.gen_range(0..mask.len());
        mask[i] = true;
    }
}

fn project(x: &[Vec<f64>], idx: &[usize], mask: &[bool]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| idx.iter().zip(mask).filter(|(_, &m)| m).map(|(&j, _)| r[j]).collect())
        .collect()
}

/// GA wrapper over a pruned subset: bitmask chromosomes, forest estimator
/// fitness on a validation split.
#[allow(clippy::too_many_arguments)]
pub fn ga_wrapper_select(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    names: &[String],
    subset: &FeatureSubset,
    cfg: &GaConfig,
    seed: u64,
) -> (FeatureSubset, Vec<f64>) {
    assert!(subset.names.len() >= 2, "wrapper needs at least 2 candidates");
    assert!(cfg.population >= 2 && cfg.tournament >= 1);
    let idx: Vec<usize> = subset
        .names
        .iter()
        .map(|n| names.iter().position(|m| m == n).expect("subset name in table"))
        .collect();
    let m = idx.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache: HashMap<Vec<bool>, f64> = HashMap::new();
    let evaluate = |mask: &[bool], cache: &mut HashMap<Vec<bool>, f64>, fit_seed: u64| -> f64 {
        if let Some(&f) = cache.get(mask) {
            return f;
        }
        let tx = project(train_x, &idx, mask);
        let vx = project(val_x, &idx, mask);
        let forest: ForestModel = tree::fit_forest(&tx, train_y, &cfg.estimator, fit_seed, false);
        let pred: Vec<u8> =
            forest.predict_proba(&vx).iter().map(|p| (p[1] >= 0.5) as u8).collect();
        let f1 = eval::metrics(&eval::confusion(val_y, &pred).expect("equal lengths")).f1;
        cache.insert(mask.to_vec(), f1);
        f1
    };
    let mut population: Vec<Vec<bool>> = (0..cfg.population)
        .map(|_| {
            let mut mask: Vec<bool> = (0..m).map(|_| rng.gen::<bool>()).collect();
            repair(&mut mask, &mut rng);
            mask
        })
        .collect();
    let mut history = Vec::with_capacity(cfg.generations + 1);
    let mut best: Option<Scored> = None;
    for gen in 0..=cfg.generations {
        let mut scored: Vec<Scored> = population
            .iter()
            .map(|mask| Scored { mask: mask.clone(), f1: evaluate(mask, &mut cache, seed) })
            .collect();
        // deterministic generation order: fitness desc, fewer bits, mask
        scored.sort_by(|a, b| {
            b.f1.total_cmp(&a.f1).then(a.bits().cmp(&b.bits())).then_with(|| a.mask.cmp(&b.mask))
        });
        if best.as_ref().is_none_or(|b| scored[0].better_than(b)) {
            best = Some(scored[0].clone());
        }
        history.push(best.as_ref().expect("set above").f1);
        if gen == cfg.generations {
            break;
        }
        let mut next: Vec<Vec<bool>> =
            scored.iter().take(cfg.elitism).map(|s| s.mask.clone()).collect();
        let tournament = |rng: &mut ChaCha8Rng| -> usize {
            (0..cfg.tournament.max(1)).map(|_| rng.gen_range(0..scored.len())).min().unwrap()
        };
        while next.len() < cfg.population {
            let (a, b) = (tournament(&mut rng), tournament(&mut rng));
            let mut child: Vec<bool> = (0..m)
                .map(|i| {
                    if rng.gen::<f64>() < cfg.crossover_p {
                        scored[a].mask[i]
                    } else {
                        scored[b].mask[i]
                    }
                })
                .collect();
            for bit in child.iter_mut() {
                if rng.gen::<f64>() < 1.0 / m as f64 {
                    *bit = !*bit;
                }
            }
            repair(&mut child, &mut rng);
            next.push(child);
        }
        population = next;
    }
    let winner = best.expect("at least one generation evaluated");
    let names_out: Vec<String> = winner
        .mask
        .iter()
        .zip(&subset.names)
        .filter(|(&b, _)| b)
        .map(|(_, n)| n.clone())
        .collect();
    (FeatureSubset { names: names_out, stage: SubsetStage::Wrapped }, history)
}

/// Full hybrid pipeline: filters, union, prune, GA wrapper.
#[allow(clippy::too_many_arguments)]
pub fn run_hybrid_selection(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    names: &[String],
    filter_cfg: &FilterConfig,
    ga_cfg: &GaConfig,
    prune_threshold: f64,
    seed: u64,
) -> (FeatureSubset, SelectionReport) {
    let (filtered, mut report) = filter_select(train_x, train_y, names, filter_cfg, seed);
    let (pruned, pairs) = correlation_prune(train_x, train_y, names, &filtered, prune_threshold);
    report.pruned = pairs;
    if pruned.names.len() < 2 {
        return (pruned, report);
    }
    let (wrapped, history) =
        ga_wrapper_select(train_x, train_y, val_x, val_y, names, &pruned, ga_cfg, seed);
    report.ga_best_fitness = history;
    (wrapped, report)
}
