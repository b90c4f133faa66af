//! Gaussian naive Bayes with variance smoothing.

use serde::{Deserialize, Serialize};

use super::{class_counts, GnbParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnbModel {
    pub variance_smoothing: f64,
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
    /// Degenerate single-class training data; predicts that class with
    /// probability 1.
    pub single_class: Option<u8>,
}

pub fn fit(x: &[Vec<f64>], y: &[u8], params: &GnbParams) -> GnbModel {
    assert!(params.variance_smoothing > 0.0, "variance_smoothing must be positive");
    let d = x[0].len();
    let counts = class_counts(y);
    let single_class = match counts {
        [_, 0] => Some(0),
        [0, _] => Some(1),
        _ => None,
    };
    let mut mean = [vec![0.0; d], vec![0.0; d]];
    let mut var = [vec![0.0; d], vec![0.0; d]];
    for (row, &label) in x.iter().zip(y) {
        let c = (label != 0) as usize;
        for j in 0..d {
            mean[c][j] += row[j];
        }
    }
    for c in 0..2 {
        if counts[c] > 0 {
            for j in 0..d {
                mean[c][j] /= counts[c] as f64;
            }
        }
    }
    for (row, &label) in x.iter().zip(y) {
        let c = (label != 0) as usize;
        for j in 0..d {
            let dlt = row[j] - mean[c][j];
            var[c][j] += dlt * dlt;
        }
    }
    // overall per-feature variance for the smoothing floor
    let n = x.len() as f64;
    let mut grand_mean = vec![0.0; d];
    for row in x {
        for j in 0..d {
            grand_mean[j] += row[j] / n;
        }
    }
    let mut max_var = 0.0f64;
    for j in 0..d {
        let v: f64 = x.iter().map(|r| (r[j] - grand_mean[j]).powi(2)).sum::<f64>() / n;
        max_var = max_var.max(v);
    }
    let floor = (params.variance_smoothing * max_var).max(1e-12);
    for c in 0..2 {
        for j in 0..d {
            var[c][j] = if counts[c] > 0 {
                (var[c][j] / counts[c] as f64).max(floor)
            } else {
                floor
            };
        }
    }
    let log_prior = [
        if counts[0] > 0 { (counts[0] as f64 / n).ln() } else { f64::NEG_INFINITY },
        if counts[1] > 0 { (counts[1] as f64 / n).ln() } else { f64::NEG_INFINITY },
    ];
    GnbModel {
        variance_smoothing: params.variance_smoothing,
        log_prior,
        mean,
        var,
        single_class,
    }
}

impl GnbModel {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Vec<[f64; 2]> {
        x.iter()
            .map(|row| {
                if let Some(c) = self.single_class {
                    let mut p = [0.0, 0.0];
                    p[c as usize] = 1.0;
                    return p;
                }
                let mut log_post = [0.0f64; 2];
                for c in 0..2 {
                    let mut lp = self.log_prior[c];
                    for j in 0..row.len() {
                        let v = self.var[c][j];
                        let dlt = row[j] - self.mean[c][j];
                        lp += -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + dlt * dlt / v);
                    }
                    log_post[c] = lp;
                }
                let m = log_post[0].max(log_post[1]);
                let e0 = (log_post[0] - m).exp();
                let e1 = (log_post[1] - m).exp();
                [e0 / (e0 + e1), e1 / (e0 + e1)]
            })
            .collect()
    }
}
