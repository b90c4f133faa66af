//! From-scratch convolutional classifier over image-encoded feature rows:
//! manual forward/backward passes, Adam/RMSprop, inverted dropout, and
//! (guided) saliency maps. Everything is f64 and deterministic per seed.

pub mod encoding;
pub mod layers;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encoding::{fit_encoding, ImageEncoding};
pub use layers::{Activation, Conv, Dense};

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("{d} features do not fit a {side}x{side} image")]
    FeatureCountTooLarge { d: usize, side: usize },
    #[error("expected {expected} pixels, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("loss became non-finite in epoch {epoch}")]
    Divergence { epoch: usize, history: Vec<EpochStats> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub activation: Activation,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnSpec {
    pub side: usize,
    pub conv: Vec<ConvLayerSpec>,
    pub dense_units: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CnnSpec {
    fn default() -> Self {
        // institutional configuration: three 3x3 conv blocks with
        // (sigmoid, relu, sigmoid) activations and per-block dropout
        CnnSpec {
            side: 32,
            conv: vec![
                ConvLayerSpec { filters: 64, kernel: 3, activation: Activation::Sigmoid, dropout: 0.12 },
                ConvLayerSpec { filters: 64, kernel: 3, activation: Activation::Relu, dropout: 0.16 },
                ConvLayerSpec { filters: 64, kernel: 3, activation: Activation::Sigmoid, dropout: 0.11 },
            ],
            dense_units: 128,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnnModel {
    pub spec: CnnSpec,
    pub convs: Vec<Conv>,
    pub dense: Dense,
    pub out: Dense,
    pub history: Vec<EpochStats>,
}

struct LayerCache {
    input: Vec<f64>,
    pre_act: Vec<f64>,
    post_act: Vec<f64>,
    pool_arg: Vec<usize>,
    drop_mask: Vec<f64>,
    h: usize,
    w: usize,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    flat: Vec<f64>,
    dense_pre: Vec<f64>,
    dense_post: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

struct Grads {
    conv: Vec<(Vec<f64>, Vec<f64>)>,
    dense: (Vec<f64>, Vec<f64>),
    out: (Vec<f64>, Vec<f64>),
}

impl Grads {
    fn zeros(model: &CnnModel) -> Grads {
        Grads {
            conv: model
                .convs
                .iter()
                .map(|c| (vec![0.0; c.w.len()], vec![0.0; c.b.len()]))
                .collect(),
            dense: (vec![0.0; model.dense.w.len()], vec![0.0; model.dense.b.len()]),
            out: (vec![0.0; model.out.w.len()], vec![0.0; model.out.b.len()]),
        }
    }

    fn add_scaled(&mut self, other: &Grads, s: f64) {
        let acc = |a: &mut Vec<f64>, b: &[f64]| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        };
        for (mine, theirs) in self.conv.iter_mut().zip(&other.conv) {
            acc(&mut mine.0, &theirs.0);
            acc(&mut mine.1, &theirs.1);
        }
        acc(&mut self.dense.0, &other.dense.0);
        acc(&mut self.dense.1, &other.dense.1);
        acc(&mut self.out.0, &other.out.0);
        acc(&mut self.out.1, &other.out.1);
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in &self.conv {
            v.extend(w);
            v.extend(b);
        }
        v.extend(&self.dense.0);
        v.extend(&self.dense.1);
        v.extend(&self.out.0);
        v.extend(&self.out.1);
        v
    }
}

impl CnnModel {
    pub fn new(spec: &CnnSpec) -> CnnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut convs = Vec::new();
        let mut ch = 1;
        let mut side = spec.side;
        for layer in &spec.conv {
            convs.push(Conv::new(ch, layer.filters, layer.kernel, &mut rng));
            ch = layer.filters;
            side /= 2;
            assert!(side >= 1, "too many pooling stages for side {}", spec.side);
        }
        let flat = ch * side * side;
        let dense = Dense::new(flat, spec.dense_units, &mut rng);
        let out = Dense::new(spec.dense_units, 2, &mut rng);
        CnnModel { spec: spec.clone(), convs, dense, out, history: Vec::new() }
    }

    pub fn n_pixels(&self) -> usize {
        self.spec.side * self.spec.side
    }

    fn forward_one(
        &self,
        image: &[f64],
        train_mode: bool,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> ForwardCache {
        assert_eq!(image.len(), self.n_pixels());
        let mut cur = image.to_vec();
        let (mut h, mut w) = (self.spec.side, self.spec.side);
        let mut caches = Vec::with_capacity(self.convs.len());
        for (conv, lspec) in self.convs.iter().zip(&self.spec.conv) {
            let input = cur;
            let pre_act = conv.forward(&input, h, w);
            let post_act = layers::activate(lspec.activation, &pre_act);
            let (pooled, pool_arg) = layers::pool_forward(&post_act, conv.out_ch, h, w);
            let (dropped, drop_mask) = if train_mode && lspec.dropout > 0.0 {
                let r = rng.as_deref_mut().expect("train mode needs an rng");
                layers::dropout_forward(&pooled, lspec.dropout, r)
            } else {
                let len = pooled.len();
                (pooled, vec![1.0; len])
            };
            caches.push(LayerCache { input, pre_act, post_act, pool_arg, drop_mask, h, w });
            cur = dropped;
            h /= 2;
            w /= 2;
        }
        let flat = cur;
        let dense_pre = self.dense.forward(&flat);
        let dense_post = layers::activate(Activation::Relu, &dense_pre);
        let logits = self.out.forward(&dense_post);
        let probs = layers::softmax(&logits);
        ForwardCache { layers: caches, flat, dense_pre, dense_post, logits, probs }
    }

    /// Backward from d_loss/d_logits; `guided` zeroes negative upstream
    /// gradients at every ReLU (saliency use only). Returns parameter
    /// gradients and d_loss/d_input.
    fn backward_one(&self, cache: &ForwardCache, dlogits: &[f64], guided: bool) -> (Grads, Vec<f64>) {
        let (d_dense_post, dw_out, db_out) = self.out.backward(&cache.dense_post, dlogits);
        let d_dense_pre = layers::activate_backward(
            Activation::Relu,
            &cache.dense_pre,
            &cache.dense_post,
            &d_dense_post,
            guided,
        );
        let (mut dcur, dw_dense, db_dense) = self.dense.backward(&cache.flat, &d_dense_pre);
        let mut conv_grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.convs.len());
        for (i, (conv, lspec)) in self.convs.iter().zip(&self.spec.conv).enumerate().rev() {
            let lc = &cache.layers[i];
            // undo dropout, then pool, then activation, then the conv itself
            let d_pooled: Vec<f64> = dcur.iter().zip(&lc.drop_mask).map(|(g, m)| g * m).collect();
            let d_post = layers::pool_backward(&d_pooled, &lc.pool_arg, lc.post_act.len());
            let d_pre =
                layers::activate_backward(lspec.activation, &lc.pre_act, &lc.post_act, &d_post, guided);
            let (din, dw, db) = conv.backward(&lc.input, &d_pre, lc.h, lc.w);
            conv_grads.push((dw, db));
            dcur = din;
        }
        conv_grads.reverse();
        (
            Grads { conv: conv_grads, dense: (dw_dense, db_dense), out: (dw_out, db_out) },
            dcur,
        )
    }

    pub fn predict_proba(&self, images: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, CnnError> {
        let expected = self.n_pixels();
        images
            .iter()
            .map(|img| {
                if img.len() != expected {
                    return Err(CnnError::ShapeMismatch { expected, got: img.len() });
                }
                let cache = self.forward_one(img, false, &mut None);
                Ok([cache.probs[0], cache.probs[1]])
            })
            .collect()
    }

    /// Pre-softmax score of `class` for a single image (saliency's target).
    pub fn class_score(&self, image: &[f64], class: usize) -> f64 {
        self.forward_one(image, false, &mut None).logits[class]
    }

    /// Max relative error between analytic parameter gradients and central
    /// differences of the batch loss (dropout disabled).
    pub fn gradient_check(&mut self, images: &[Vec<f64>], labels: &[u8], eps: f64) -> f64 {
        let (_, grads, _) = self.batch_loss_grads(images, labels, None);
        let analytic = grads.flat();
        let mut params = self.params_flat();
        let mut worst = 0.0f64;
        for i in 0..params.len() {
            let orig = params[i];
            params[i] = orig + eps;
            self.set_params_flat(&params);
            let (hi, _, _) = self.batch_loss_grads(images, labels, None);
            params[i] = orig - eps;
            self.set_params_flat(&params);
            let (lo, _, _) = self.batch_loss_grads(images, labels, None);
            params[i] = orig;
            let numeric = (hi - lo) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        self.set_params_flat(&params);
        worst
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for c in &self.convs {
            v.extend(&c.w);
            v.extend(&c.b);
        }
        v.extend(&self.dense.w);
        v.extend(&self.dense.b);
        v.extend(&self.out.w);
        v.extend(&self.out.b);
        v
    }

    fn set_params_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        let mut take = |dst: &mut Vec<f64>| {
            let n = dst.len();
            dst.copy_from_slice(&flat[at..at + n]);
            at += n;
        };
        for c in &mut self.convs {
            take(&mut c.w);
            take(&mut c.b);
        }
        take(&mut self.dense.w);
        take(&mut self.dense.b);
        take(&mut self.out.w);
        take(&mut self.out.b);
        assert_eq!(at, flat.len());
    }

    /// Mean cross-entropy and mean parameter gradients over a batch.
    /// Dropout draws come from `rng` when given; None disables dropout.
    fn batch_loss_grads(
        &self,
        images: &[Vec<f64>],
        labels: &[u8],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, Grads, usize) {
        let n = images.len() as f64;
        let mut total = Grads::zeros(self);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (img, &label) in images.iter().zip(labels) {
            let cache = self.forward_one(img, rng.is_some(), &mut rng);
            let y = (label != 0) as usize;
            loss += -(cache.probs[y].max(1e-300)).ln() / n;
            if (cache.probs[1] >= cache.probs[0]) == (y == 1) {
                correct += 1;
            }
            let mut dlogits = cache.probs.clone();
            dlogits[y] -= 1.0;
            let (g, _) = self.backward_one(&cache, &dlogits, false);
            total.add_scaled(&g, 1.0 / n);
        }
        (loss, total, correct)
    }
}

pub fn train_cnn(
    train: &[Vec<f64>],
    train_y: &[u8],
    val: Option<(&[Vec<f64>], &[u8])>,
    spec: &CnnSpec,
) -> Result<CnnModel, CnnError> {
    assert!(spec.epochs >= 1 && spec.batch_size >= 1);
    let mut model = CnnModel::new(spec);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(2));
    let n_params = model.params_flat().len();
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut step = 0usize;
    let eps = 1e-8;
    for epoch in 0..spec.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(spec.batch_size) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| train[i].clone()).collect();
            let by: Vec<u8> = chunk.iter().map(|&i| train_y[i]).collect();
            let (loss, grads, ok) = model.batch_loss_grads(&bx, &by, Some(&mut dropout_rng));
            if !loss.is_finite() {
                return Err(CnnError::Divergence { epoch, history: model.history.clone() });
            }
            epoch_loss += loss * bx.len() as f64;
            correct += ok;
            step += 1;
            let g = grads.flat();
            let mut p = model.params_flat();
            match spec.optimizer {
                OptimizerKind::Adam => {
                    let (b1, b2): (f64, f64) = (0.9, 0.999);
                    let bc1 = 1.0 - b1.powi(step as i32);
                    let bc2 = 1.0 - b2.powi(step as i32);
                    for i in 0..n_params {
                        m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
                        m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
                        p[i] -= spec.learning_rate * (m1[i] / bc1) / ((m2[i] / bc2).sqrt() + eps);
                    }
                }
                OptimizerKind::Rmsprop => {
                    for i in 0..n_params {
                        m2[i] = 0.9 * m2[i] + 0.1 * g[i] * g[i];
                        p[i] -= spec.learning_rate * g[i] / (m2[i].sqrt() + eps);
                    }
                }
            }
            model.set_params_flat(&p);
        }
        let val_accuracy = val.map(|(vx, vy)| {
            let probs = model.predict_proba(vx).expect("val images match spec side");
            let hits = probs
                .iter()
                .zip(vy)
                .filter(|(p, &y)| (p[1] >= 0.5) as u8 == y)
                .count();
            hits as f64 / vx.len() as f64
        });
        model.history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy,
        });
    }
    Ok(model)
}

/// Absolute input gradient of the target class's pre-softmax score.
pub fn saliency(model: &CnnModel, image: &[f64], target_class: usize, guided: bool) -> Vec<f64> {
    let cache = model.forward_one(image, false, &mut None);
    let mut dlogits = vec![0.0; cache.logits.len()];
    dlogits[target_class] = 1.0;
    let (_, dinput) = model.backward_one(&cache, &dlogits, guided);
    dinput.iter().map(|g| g.abs()).collect()
}

/// Plain-text PGM (P2) for eyeballing encoded images and saliency maps.
pub fn to_pgm(map: &[f64], side: usize) -> String {
    assert_eq!(map.len(), side * side);
    let peak = map.iter().cloned().fold(0.0f64, f64::max);
    let mut out = format!("P2\n{side} {side}\n255\n");
    for row in map.chunks(side) {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let g = if peak > 0.0 { (v / peak * 255.0).round() as i64 } else { 0 };
                g.clamp(0, 255).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
