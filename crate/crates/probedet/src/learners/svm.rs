//! Kernel SVM trained with sequential minimal optimization, probabilities
//! via a logistic link fitted on training decision values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{logreg, LogRegParams, SvmKernel, SvmParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub params: SvmParams,
    pub train_x: Vec<Vec<f64>>,
    /// Labels mapped to -1/+1.
    pub train_y: Vec<f64>,
    pub alphas: Vec<f64>,
    pub bias: f64,
    /// Logistic link: sigma(scale * decision + offset).
    pub prob_scale: f64,
    pub prob_offset: f64,
    pub converged: bool,
}

fn kernel(params: &SvmParams, a: &[f64], b: &[f64]) -> f64 {
    match params.kernel {
        SvmKernel::Rbf => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-params.gamma * d2).exp()
        }
        SvmKernel::Poly => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (params.gamma * dot + 1.0).powf(params.degree)
        }
    }
}

pub fn fit(x: &[Vec<f64>], y: &[u8], params: &SvmParams, seed: u64) -> SvmModel {
    assert!(params.c > 0.0, "C must be positive");
    assert!(params.gamma > 0.0, "gamma must be positive");
    let n = x.len();
    let ys: Vec<f64> = y.iter().map(|&v| if v != 0 { 1.0 } else { -1.0 }).collect();
    // full Gram matrix at desk scale
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| kernel(params, &x[i], &x[j])).collect())
        .collect();
    let c = params.c;
    let tol = params.tol;
    let mut alphas = vec![0.0f64; n];
    let mut b = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decision = |alphas: &[f64], b: f64, i: usize| -> f64 {
        let mut s = b;
        for j in 0..n {
            if alphas[j] != 0.0 {
                s += alphas[j] * ys[j] * gram[j][i];
            }
        }
        s
    };
    let mut passes = 0usize;
    let mut total_iters = 0usize;
    let iter_cap = params.max_passes.saturating_mul(200).max(200);
    let mut converged = false;
    while passes < params.max_passes {
        total_iters += 1;
        if total_iters > iter_cap {
            break;
        }
        let mut changed = 0usize;
        for i in 0..n {
            let ei = decision(&alphas, b, i) - ys[i];
            let violates = (ys[i] * ei < -tol && alphas[i] < c) || (ys[i] * ei > tol && alphas[i] > 0.0);
            if !violates {
                continue;
            }
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let ej = decision(&alphas, b, j) - ys[j];
            let (ai_old, aj_old) = (alphas[i], alphas[j]);
            let (lo, hi) = if ys[i] != ys[j] {
                ((aj_old - ai_old).max(0.0), (c + aj_old - ai_old).min(c))
            } else {
                ((ai_old + aj_old - c).max(0.0), (ai_old + aj_old).min(c))
            };
            if lo >= hi {
                continue;
            }
            let eta = 2.0 * gram[i][j] - gram[i][i] - gram[j][j];
            if eta >= 0.0 {
                continue;
            }
            let mut aj = aj_old - ys[j] * (ei - ej) / eta;
            aj = aj.clamp(lo, hi);
            if (aj - aj_old).abs() < 1e-5 {
                continue;
            }
            let ai = ai_old + ys[i] * ys[j] * (aj_old - aj);
            let b1 = b - ei - ys[i] * (ai - ai_old) * gram[i][i] - ys[j] * (aj - aj_old) * gram[i][j];
            let b2 = b - ej - ys[i] * (ai - ai_old) * gram[i][j] - ys[j] * (aj - aj_old) * gram[j][j];
            b = if ai > 0.0 && ai < c {
                b1
            } else if aj > 0.0 && aj < c {
                b2
            } else {
                (b1 + b2) / 2.0
            };
            alphas[i] = ai;
            alphas[j] = aj;
            changed += 1;
        }
        if changed == 0 {
            passes += 1;
            converged = true;
        } else {
            passes = 0;
        }
    }
    // probability calibration on training decision values
    let decisions: Vec<Vec<f64>> = (0..n).map(|i| vec![decision(&alphas, b, i)]).collect();
    let link = logreg::fit(
        &decisions,
        y,
        &LogRegParams { c: 1.0, l2_penalty: false, max_iter: 200, tol: 1e-8 },
    );
    SvmModel {
        params: params.clone(),
        train_x: x.to_vec(),
        train_y: ys,
        alphas,
        bias: b,
        prob_scale: link.weights[0],
        prob_offset: link.intercept,
        converged,
    }
}

impl SvmModel {
    pub fn decision(&self, q: &[f64]) -> f64 {
        let mut s = self.bias;
        for (j, a) in self.alphas.iter().enumerate() {
            if *a != 0.0 {
                s += a * self.train_y[j] * kernel(&self.params, &self.train_x[j], q);
            }
        }
        s
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Vec<[f64; 2]> {
        x.iter()
            .map(|q| {
                let z = self.prob_scale * self.decision(q) + self.prob_offset;
                let p = 1.0 / (1.0 + (-z).exp());
                [1.0 - p, p]
            })
            .collect()
    }
}
