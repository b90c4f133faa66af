//! Brute-force k-nearest-neighbor classifier with Minkowski-p distance.

use serde::{Deserialize, Serialize};

use super::{KnnParams, KnnWeights, LearnerError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<u8>,
}

pub fn fit(x: &[Vec<f64>], y: &[u8], params: &KnnParams) -> Result<KnnModel, LearnerError> {
    assert!(params.k >= 1, "k must be at least 1");
    assert!(params.p >= 1.0, "p must be at least 1");
    if params.k > x.len() {
        return Err(LearnerError::KTooLarge { k: params.k, n: x.len() });
    }
    Ok(KnnModel { params: params.clone(), train_x: x.to_vec(), train_y: y.to_vec() })
}

fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

impl KnnModel {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Vec<[f64; 2]> {
        x.iter().map(|q| self.predict_one(q)).collect()
    }

    fn predict_one(&self, q: &[f64]) -> [f64; 2] {
        let mut ranked: Vec<(f64, usize)> = self
            .train_x
            .iter()
            .enumerate()
            .map(|(i, row)| (minkowski(q, row, self.params.p), i))
            .collect();
        // distance ties broken by training-row order
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let neighbors = &ranked[..self.params.k];
        match self.params.weights {
            KnnWeights::Uniform => {
                let pos = neighbors.iter().filter(|&&(_, i)| self.train_y[i] != 0).count();
                let p1 = pos as f64 / self.params.k as f64;
                [1.0 - p1, p1]
            }
            KnnWeights::Distance => {
                // exact match dominates: that label with probability 1
                if neighbors[0].0 == 0.0 {
                    let mut p = [0.0, 0.0];
                    p[self.train_y[neighbors[0].1] as usize] = 1.0;
                    return p;
                }
                let mut w = [0.0f64; 2];
                for &(d, i) in neighbors {
                    w[(self.train_y[i] != 0) as usize] += 1.0 / d;
                }
                let total = w[0] + w[1];
                [w[0] / total, w[1] / total]
            }
        }
    }
}
