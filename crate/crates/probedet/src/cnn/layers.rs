//! Single-sample layer primitives with exact analytic backward passes.
//! Tensors are flat `Vec<f64>` in (channels, height, width) order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Convolution weights: `w[f][c][ky][kx]` flattened, plus one bias per
/// output channel. Stride 1, zero padding "same" (odd kernels).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> Conv {
        assert!(k % 2 == 1, "same padding needs an odd kernel");
        let fan_in = (in_ch * k * k) as f64;
        let scale = (2.0 / fan_in).sqrt();
        let w = (0..out_ch * in_ch * k * k).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect();
        Conv { in_ch, out_ch, k, w, b: vec![0.0; out_ch] }
    }

    fn widx(&self, f: usize, c: usize, ky: usize, kx: usize) -> usize {
        ((f * self.in_ch + c) * self.k + ky) * self.k + kx
    }

    pub fn forward(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let pad = self.k / 2;
        let mut out = vec![0.0; self.out_ch * h * w];
        for f in 0..self.out_ch {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = self.b[f];
                    for c in 0..self.in_ch {
                        for ky in 0..self.k {
                            let iy = y as isize + ky as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = x as isize + kx as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += self.w[self.widx(f, c, ky, kx)]
                                    * input[(c * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out[(f * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    /// Returns (d_input, d_w, d_b).
    pub fn backward(
        &self,
        input: &[f64],
        dout: &[f64],
        h: usize,
        w: usize,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let pad = self.k / 2;
        let mut din = vec![0.0; self.in_ch * h * w];
        let mut dw = vec![0.0; self.w.len()];
        let mut db = vec![0.0; self.out_ch];
        for f in 0..self.out_ch {
            for y in 0..h {
                for x in 0..w {
                    let g = dout[(f * h + y) * w + x];
                    if g == 0.0 {
                        continue;
                    }
                    db[f] += g;
                    for c in 0..self.in_ch {
                        for ky in 0..self.k {
                            let iy = y as isize + ky as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = x as isize + kx as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let ii = (c * h + iy as usize) * w + ix as usize;
                                dw[self.widx(f, c, ky, kx)] += g * input[ii];
                                din[ii] += g * self.w[self.widx(f, c, ky, kx)];
                            }
                        }
                    }
                }
            }
        }
        (din, dw, db)
    }
}

pub fn activate(a: Activation, z: &[f64]) -> Vec<f64> {
    match a {
        Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Sigmoid => z.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
    }
}

/// d_loss/d_z from d_loss/d_activation. `guided` additionally zeroes
/// negative upstream gradients at ReLUs (saliency only, never training).
pub fn activate_backward(a: Activation, z: &[f64], out: &[f64], dout: &[f64], guided: bool) -> Vec<f64> {
    match a {
        Activation::Relu => z
            .iter()
            .zip(dout)
            .map(|(&zv, &g)| {
                let g = if guided && g < 0.0 { 0.0 } else { g };
                if zv > 0.0 { g } else { 0.0 }
            })
            .collect(),
        Activation::Sigmoid => out.iter().zip(dout).map(|(&o, &g)| g * o * (1.0 - o)).collect(),
    }
}

/// 2×2 max pool, stride 2; odd trailing rows/columns are dropped.
/// Returns the pooled map and the argmax input index per output cell.
pub fn pool_forward(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    let mut arg = vec![0usize; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut bi = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let ii = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                        if input[ii] > best {
                            best = input[ii];
                            bi = ii;
                        }
                    }
                }
                let oi = (ch * oh + y) * ow + x;
                out[oi] = best;
                arg[oi] = bi;
            }
        }
    }
    (out, arg)
}

pub fn pool_backward(dout: &[f64], arg: &[usize], in_len: usize) -> Vec<f64> {
    let mut din = vec![0.0; in_len];
    for (g, &i) in dout.iter().zip(arg) {
        din[i] += g;
    }
    din
}

/// Inverted dropout: kept units scale by 1/(1-rate) so eval needs no
/// correction. Returns (output, mask-with-scale).
pub fn dropout_forward(input: &[f64], rate: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..1.0).contains(&rate));
    if rate == 0.0 {
        return (input.to_vec(), vec![1.0; input.len()]);
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> =
        input.iter().map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
    (input.iter().zip(&mask).map(|(v, m)| v * m).collect(), mask)
}

/// Fully connected layer, `w[out][in]` flattened.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn new(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Dense {
        let scale = (2.0 / n_in as f64).sqrt();
        let w = (0..n_out * n_in).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect();
        Dense { n_in, n_out, w, b: vec![0.0; n_out] }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                self.b[o]
                    + self.w[o * self.n_in..(o + 1) * self.n_in]
                        .iter()
                        .zip(input)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&self, input: &[f64], dout: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut din = vec![0.0; self.n_in];
        let mut dw = vec![0.0; self.w.len()];
        for o in 0..self.n_out {
            let g = dout[o];
            for i in 0..self.n_in {
                dw[o * self.n_in + i] = g * input[i];
                din[i] += g * self.w[o * self.n_in + i];
            }
        }
        (din, dw, dout.to_vec())
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn hand_convolution() {
        // 2x2 image, one 3x3 filter of ones, zero bias: each output cell is
        // the sum of the in-bounds neighborhood
        let conv = Conv { in_ch: 1, out_ch: 1, k: 3, w: vec![1.0; 9], b: vec![0.0] };
        let img = vec![1.0, 2.0, 3.0, 4.0];
        let out = conv.forward(&img, 2, 2);
        assert_eq!(out, vec![10.0, 10.0, 10.0, 10.0]);
        // distinct kernel exercises alignment: center weight only
        let mut w = vec![0.0; 9];
        w[4] = 2.0; // center tap
        let conv2 = Conv { in_ch: 1, out_ch: 1, k: 3, w, b: vec![0.5] };
        assert_eq!(conv2.forward(&img, 2, 2), vec![2.5, 4.5, 6.5, 8.5]);
    }

    #[test]
    fn pool_picks_max_and_routes_gradient() {
        let img = vec![1.0, 5.0, 3.0, 2.0, /* ch2 */ 0.0, -1.0, -2.0, -3.0];
        let (out, arg) = pool_forward(&img, 2, 2, 2);
        assert_eq!(out, vec![5.0, 0.0]);
        assert_eq!(arg, vec![1, 4]);
        let din = pool_backward(&[7.0, 9.0], &arg, 8);
        assert_eq!(din[1], 7.0);
        assert_eq!(din[4], 9.0);
        assert_eq!(din.iter().sum::<f64>(), 16.0);
    }

    #[test]
    fn dropout_expectation_matches_eval_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = vec![2.0, -1.0, 0.5, 4.0];
        let rate = 0.3;
        let mut acc = [0.0; 4];
        let trials = 10_000;
        for _ in 0..trials {
            let (out, _) = dropout_forward(&input, rate, &mut rng);
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o;
            }
        }
        for (mean, &x) in acc.iter().map(|a| a / trials as f64).zip(&input) {
            assert!((mean - x).abs() <= 0.02 * x.abs().max(1.0), "{mean} vs {x}");
        }
        // rate 0 is the identity
        let (same, mask) = dropout_forward(&input, 0.0, &mut rng);
        assert_eq!(same, input);
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1.0, -2.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let uniform = softmax(&[0.0, 0.0]);
        assert_eq!(uniform, vec![0.5, 0.5]);
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Dense::new(4, 3, &mut rng);
        let input: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
        // scalar loss = sum of outputs squared
        let loss = |l: &Dense| -> f64 { l.forward(&input).iter().map(|o| o * o).sum() };
        let out = layer.forward(&input);
        let dout: Vec<f64> = out.iter().map(|o| 2.0 * o).collect();
        let (_, dw, db) = layer.backward(&input, &dout);
        let eps = 1e-6;
        for i in 0..layer.w.len() {
            let orig = layer.w[i];
            layer.w[i] = orig + eps;
            let hi = loss(&layer);
            layer.w[i] = orig - eps;
            let lo = loss(&layer);
            layer.w[i] = orig;
            assert!((dw[i] - (hi - lo) / (2.0 * eps)).abs() < 1e-6);
        }
        for o in 0..3 {
            let orig = layer.b[o];
            layer.b[o] = orig + eps;
            let hi = loss(&layer);
            layer.b[o] = orig - eps;
            let lo = loss(&layer);
            layer.b[o] = orig;
            assert!((db[o] - (hi - lo) / (2.0 * eps)).abs() < 1e-6);
        }
    }
}
