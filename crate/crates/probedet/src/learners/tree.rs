//! Decision trees (Gini CART) plus two averaging variants: bootstrap
//! forests with sqrt(d) feature subsampling and extremely randomized
//! trees (random split thresholds, no bootstrap).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForestParams, TreeParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Leaf { p1: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    /// Impurity-decrease importances, normalized to sum to 1 when any
    /// split exists.
    pub importances: Vec<f64>,
    pub params: TreeParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub importances: Vec<f64>,
    pub params: ForestParams,
    pub extra: bool,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    params: TreeParams,
    /// Number of candidate features per split; None means all.
    max_features: Option<usize>,
    /// Draw one uniform threshold per feature instead of scanning.
    random_thresholds: bool,
    n_root: usize,
    nodes: Vec<Node>,
    raw_importance: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl Builder<'_> {
    fn candidate_features(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let d = self.x[0].len();
        match self.max_features {
            Some(m) if m < d => {
                let mut all: Vec<usize> = (0..d).collect();
                all.shuffle(rng);
                all.truncate(m);
                all.sort_unstable();
                all
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let n = idx.len();
        let pos: usize = idx.iter().filter(|&&i| self.y[i] != 0).count();
        let parent = gini(pos, n);
        if parent == 0.0 {
            return None;
        }
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        for feature in self.candidate_features(rng) {
            if self.random_thresholds {
                let lo = idx.iter().map(|&i| self.x[i][feature]).fold(f64::INFINITY, f64::min);
                let hi = idx.iter().map(|&i| self.x[i][feature]).fold(f64::NEG_INFINITY, f64::max);
                if hi <= lo {
                    continue;
                }
                let threshold = rng.gen_range(lo..hi);
                let (mut nl, mut pl) = (0usize, 0usize);
                for &i in idx {
                    if self.x[i][feature] <= threshold {
                        nl += 1;
                        pl += (self.y[i] != 0) as usize;
                    }
                }
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let child = (nl as f64 * gini(pl, nl) + nr as f64 * gini(pos - pl, nr)) / n as f64;
                let decrease = (parent - child) * n as f64 / self.n_root as f64;
                if decrease > 1e-12 && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(BestSplit { feature, threshold, decrease });
                }
            } else {
                let mut vals: Vec<(f64, u8)> = idx.iter().map(|&i| (self.x[i][feature], self.y[i])).collect();
                vals.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut nl = 0usize;
                let mut pl = 0usize;
                for k in 0..n - 1 {
                    nl += 1;
                    pl += (vals[k].1 != 0) as usize;
                    if vals[k].0 == vals[k + 1].0 {
                        continue;
                    }
                    let nr = n - nl;
                    if nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    let child = (nl as f64 * gini(pl, nl) + nr as f64 * gini(pos - pl, nr)) / n as f64;
                    let decrease = (parent - child) * n as f64 / self.n_root as f64;
                    if decrease > 1e-12 && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                        let threshold = (vals[k].0 + vals[k + 1].0) / 2.0;
                        best = Some(BestSplit { feature, threshold, decrease });
                    }
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i] != 0).count();
        let at_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        let split = if at_limit || n < 2 * self.params.min_leaf.max(1) {
            None
        } else {
            self.best_split(&idx, rng)
        };
        match split {
            None => {
                self.nodes.push(Node::Leaf { p1: pos as f64 / n as f64 });
                self.nodes.len() - 1
            }
            Some(s) => {
                self.raw_importance[s.feature] += s.decrease;
                let (li, ri): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| self.x[i][s.feature] <= s.threshold);
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf { p1: 0.0 }); // placeholder
                let left = self.build(li, depth + 1, rng);
                let right = self.build(ri, depth + 1, rng);
                self.nodes[slot] = Node::Split { feature: s.feature, threshold: s.threshold, left, right };
                slot
            }
        }
    }
}

fn fit_on_indices(
    x: &[Vec<f64>],
    y: &[u8],
    idx: Vec<usize>,
    params: &TreeParams,
    max_features: Option<usize>,
    random_thresholds: bool,
    rng: &mut ChaCha8Rng,
) -> TreeModel {
    let d = x[0].len();
    let mut b = Builder {
        x,
        y,
        params: params.clone(),
        max_features,
        random_thresholds,
        n_root: idx.len(),
        nodes: Vec::new(),
        raw_importance: vec![0.0; d],
    };
    b.build(idx, 0, rng);
    let total: f64 = b.raw_importance.iter().sum();
    let importances = if total > 0.0 {
        b.raw_importance.iter().map(|v| v / total).collect()
    } else {
        b.raw_importance
    };
    TreeModel { nodes: b.nodes, importances, params: params.clone() }
}

pub fn fit_tree(x: &[Vec<f64>], y: &[u8], params: &TreeParams, seed: u64) -> TreeModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fit_on_indices(x, y, (0..x.len()).collect(), params, None, false, &mut rng)
}

pub fn fit_forest(x: &[Vec<f64>], y: &[u8], params: &ForestParams, seed: u64, extra: bool) -> ForestModel {
    assert!(params.n_trees >= 1, "need at least one tree");
    let n = x.len();
    let d = x[0].len();
    let max_features = ((d as f64).sqrt().floor() as usize).max(1);
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(t as u64 + 1)));
        let idx: Vec<usize> = if extra {
            (0..n).collect()
        } else {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        };
        trees.push(fit_on_indices(x, y, idx, &TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf }, Some(max_features), extra, &mut rng));
    }
    let mut importances = vec![0.0; d];
    for t in &trees {
        for (s, v) in importances.iter_mut().zip(&t.importances) {
            *s += v / trees.len() as f64;
        }
    }
    ForestModel { trees, importances, params: params.clone(), extra }
}

impl TreeModel {
    pub fn predict_one(&self, q: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { p1 } => return *p1,
                Node::Split { feature, threshold, left, right } => {
                    at = if q[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Vec<[f64; 2]> {
        x.iter().map(|q| {
            let p = self.predict_one(q);
            [1.0 - p, p]
        }).collect()
    }
}

impl ForestModel {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Vec<[f64; 2]> {
        x.iter()
            .map(|q| {
                let p: f64 = self.trees.iter().map(|t| t.predict_one(q)).sum::<f64>() / self.trees.len() as f64;
                [1.0 - p, p]
            })
            .collect()
    }
}
