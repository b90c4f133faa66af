//! Tabular-to-image encoding: min-max scale, tile the feature vector
//! `k = floor(side²/d)` times, zero-pad the remainder, reshape row-major.

use serde::{Deserialize, Serialize};

use super::CnnError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageEncoding {
    pub d: usize,
    pub side: usize,
    pub repeats: usize,
    pub pad: usize,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_encoding(train: &[Vec<f64>], side: usize) -> Result<ImageEncoding, CnnError> {
    let d = train.first().map_or(0, |r| r.len());
    if d == 0 || d > side * side {
        return Err(CnnError::FeatureCountTooLarge { d, side });
    }
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in train {
        for j in 0..d {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    let repeats = (side * side) / d;
    let pad = side * side - repeats * d;
    Ok(ImageEncoding { d, side, repeats, pad, min, max })
}

impl ImageEncoding {
    /// Per-feature scaled value in [0,1]; constant features map to 0 and
    /// out-of-range values clamp.
    fn scale(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range > 0.0 {
            ((v - self.min[j]) / range).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Row-major side×side image as a flat vector.
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "feature count mismatch");
        let n = self.side * self.side;
        let mut img = vec![0.0; n];
        for (i, slot) in img.iter_mut().enumerate().take(self.repeats * self.d) {
            *slot = self.scale(i % self.d, x[i % self.d]);
        }
        img
    }
}
