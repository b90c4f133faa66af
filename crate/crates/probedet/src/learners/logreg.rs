//! Binary logistic regression trained by full-batch gradient descent with
//! backtracking line search. Deterministic; stops when the gradient
//! max-norm drops below `tol` or the iteration budget runs out.

use serde::{Deserialize, Serialize};

use super::LogRegParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn loss_and_grad(
    x: &[Vec<f64>],
    y: &[u8],
    w: &[f64],
    b: f64,
    l2: Option<f64>,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let d = w.len();
    let mut loss = 0.0;
    let mut gw = vec![0.0; d];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = row.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>() + b;
        let p = sigmoid(z);
        let t = label as f64;
        // numerically safe log-loss
        let zt = if label != 0 { z } else { -z };
        loss += if zt > 0.0 { (1.0 + (-zt).exp()).ln() } else { -zt + (1.0 + zt.exp()).ln() };
        let err = p - t;
        for j in 0..d {
            gw[j] += err * row[j];
        }
        gb += err;
    }
    loss /= n;
    for g in gw.iter_mut() {
        *g /= n;
    }
    gb /= n;
    if let Some(lambda) = l2 {
        for j in 0..d {
            loss += 0.5 * lambda * w[j] * w[j] / n;
            gw[j] += lambda * w[j] / n;
        }
    }
    (loss, gw, gb)
}

pub fn fit(x: &[Vec<f64>], y: &[u8], params: &LogRegParams) -> LogRegModel {
    assert!(params.tol > 0.0, "tol must be positive");
    assert!(params.c > 0.0, "C must be positive");
    let d = x[0].len();
    let l2 = params.l2_penalty.then_some(1.0 / params.c);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut step = 1.0f64;
    for it in 0..params.max_iter {
        iterations = it + 1;
        let (loss, gw, gb) = loss_and_grad(x, y, &w, b, l2);
        let gmax = gw.iter().chain(std::iter::once(&gb)).fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax <= params.tol {
            converged = true;
            iterations = it;
            break;
        }
        let gnorm2: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        // backtracking line search, Armijo condition
        step = (step * 2.0).min(1e6);
        loop {
            let wt: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
            let bt = b - step * gb;
            let (lt, _, _) = loss_and_grad(x, y, &wt, bt, l2);
            if lt <= loss - 1e-4 * step * gnorm2 || step < 1e-16 {
                w = wt;
                b = bt;
                break;
            }
            step *= 0.5;
        }
    }
    LogRegModel { weights: w, intercept: b, converged, iterations }
}

impl LogRegModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>() + self.intercept
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Vec<[f64; 2]> {
        x.iter()
            .map(|row| {
                let p = sigmoid(self.decision(row));
                [1.0 - p, p]
            })
            .collect()
    }
}
