//! Straight-through-estimator training of the binary CNN.
//!
//! Real-valued latent weights are kept for every kernel and FC weight. The
//! forward pass uses their signs (with `sign(0) = +1`) under exactly the
//! reference inference semantics; the gradient of the softmax cross-entropy
//! on the scaled class scores is passed straight through the sign to the
//! latents, which are then clipped to `[-1, 1]`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;
use crate::gesture::{DatasetSplit, GestureSample};
use crate::model::{argmax, reference_infer, BnnModel, DEFAULT_KERNEL_SIZE};
use crate::plane::BitImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub kernel_size: usize,
    /// Latents start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Multiplier on the learning rate for kernel latents.
    pub kernel_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            lr: 20.0,
            epochs: 15,
            batch_size: 16,
            kernel_size: DEFAULT_KERNEL_SIZE,
            init_scale: 0.05,
            kernel_lr_scale: 0.01,
        }
    }
}

/// Real-valued shadow weights mirroring a [`BnnModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    geometry: PlaneGeometry,
    k: usize,
    class_names: Vec<String>,
    /// `[block][dy·k + dx]`, flattened.
    pub kernels: Vec<f32>,
    /// `[class][feature]`, flattened.
    pub fc: Vec<f32>,
    pub epoch: usize,
}

#[inline]
fn sign(x: f32) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

impl LatentModel {
    pub fn random(
        geometry: PlaneGeometry,
        k: usize,
        class_names: Vec<String>,
        init_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let s = init_scale as f32;
        let mut draw = |n: usize| -> Vec<f32> {
            (0..n).map(|_| (2.0 * rng.random::<f32>() - 1.0) * s).collect()
        };
        let kernels = draw(geometry.num_blocks() * k * k);
        let fc = draw(class_names.len() * geometry.features());
        Self {
            geometry,
            k,
            class_names,
            kernels,
            fc,
            epoch: 0,
        }
    }

    pub fn binarize(&self) -> BnnModel {
        let kk = self.k * self.k;
        let f = self.geometry.features();
        BnnModel::new(
            self.geometry,
            self.k,
            self.kernels.chunks(kk).map(|c| c.iter().map(|&w| sign(w)).collect()).collect(),
            self.class_names.clone(),
            self.fc.chunks(f).map(|c| c.iter().map(|&w| sign(w)).collect()).collect(),
        )
        .expect("latent shapes mirror a valid model")
    }
}

/// Per-position window bit patterns of one input: bit `dy·k + dx` of entry
/// `y·valid + x` is `input(y+dy, x+dx)`.
struct Windows {
    valid: usize,
    bits: Vec<u64>,
}

impl Windows {
    fn new(input: &BitImage, k: usize) -> Self {
        let bs = input.height();
        let valid = bs - k + 1;
        let mut bits = vec![0u64; valid * valid];
        for y in 0..valid {
            for x in 0..valid {
                let mut w = 0u64;
                for dy in 0..k {
                    for dx in 0..k {
                        if input.get(y + dy, x + dx) != 0 {
                            w |= 1 << (dy * k + dx);
                        }
                    }
                }
                bits[y * valid + x] = w;
            }
        }
        Self { valid, bits }
    }
}

/// Forward pass state kept for the backward pass.
struct Forward {
    /// De-replicated pooled features, `[block][i][j]` flattened.
    pooled: Vec<i32>,
    /// Position (flattened over the block) of each pooled cell's max, or
    /// `usize::MAX` where the cell is zero.
    argpos: Vec<usize>,
    scores: Vec<i64>,
}

/// Sign-weight forward pass with the same semantics as
/// [`reference_infer`](crate::model::reference_infer).
fn forward_binary(model: &BnnModel, windows: &Windows) -> Forward {
    let g = model.geometry();
    let (bs, k, p) = (g.block_size(), model.kernel_size(), g.pooled_size());
    let nb = g.num_blocks();
    let valid = windows.valid;
    let mut pooled = vec![0i32; nb * p * p];
    let mut argpos = vec![usize::MAX; nb * p * p];
    let mut conv = vec![0i32; bs * bs];
    for b in 0..nb {
        let mut plus = 0u64;
        for (t, &w) in model.kernel(b).iter().enumerate() {
            if w > 0 {
                plus |= 1 << t;
            }
        }
        conv.fill(0);
        for y in 0..valid {
            for x in 0..valid {
                let w = windows.bits[y * valid + x];
                // (+1 taps hit) - (-1 taps hit)
                conv[y * bs + x] = 2 * (w & plus).count_ones() as i32 - w.count_ones() as i32;
            }
        }
        for i in 0..p {
            for j in 0..p {
                let mut best = 0i32;
                let mut at = usize::MAX;
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let pos = (2 * i + di) * bs + 2 * j + dj;
                    if conv[pos] > best {
                        best = conv[pos];
                        at = pos;
                    }
                }
                pooled[(b * p + i) * p + j] = best;
                argpos[(b * p + i) * p + j] = at;
            }
        }
    }
    let _ = k;
    let scores = (0..model.num_classes())
        .map(|c| {
            model
                .fc(c)
                .iter()
                .zip(&pooled)
                .filter(|(_, &v)| v != 0)
                .map(|(&w, &v)| w as i64 * v as i64)
                .sum()
        })
        .collect();
    Forward {
        pooled,
        argpos,
        scores,
    }
}

/// Class scores of `model` computed by the training forward pass.
pub fn training_scores(model: &BnnModel, input: &BitImage) -> Vec<i64> {
    forward_binary(model, &Windows::new(input, model.kernel_size())).scores
}

fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let loss = -(probs[label].max(1e-300)).ln();
    (loss, probs)
}

/// Straight-through gradients of one sample, accumulated into `gk`/`gf`.
/// Returns the sample loss and whether it was classified correctly.
fn accumulate_grad(
    model: &BnnModel,
    sample: &GestureSample,
    scale: f64,
    gk: &mut [f64],
    gf: &mut [f64],
) -> (f64, bool) {
    let g = model.geometry();
    let (bs, k) = (g.block_size(), model.kernel_size());
    let feats = g.features();
    let cells = g.pooled_size() * g.pooled_size();
    let win = Windows::new(&sample.image, k);
    let fwd = forward_binary(model, &win);
    let logits: Vec<f64> = fwd.scores.iter().map(|&s| s as f64 * scale).collect();
    let (loss, probs) = softmax_xent(&logits, sample.label);
    let correct = argmax(&fwd.scores).ok() == Some(sample.label);
    let dscore: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| (p - (c == sample.label) as u8 as f64) * scale)
        .collect();

    for (c, &ds) in dscore.iter().enumerate() {
        let row = &mut gf[c * feats..(c + 1) * feats];
        for (gw, &v) in row.iter_mut().zip(&fwd.pooled) {
            if v != 0 {
                *gw += ds * v as f64;
            }
        }
    }

    let kk = k * k;
    for (e, &pos) in fwd.argpos.iter().enumerate() {
        if pos == usize::MAX {
            continue;
        }
        let dpool: f64 = dscore
            .iter()
            .enumerate()
            .map(|(c, &ds)| ds * model.fc(c)[e] as f64)
            .sum();
        let b = e / cells;
        let (y, x) = (pos / bs, pos % bs);
        let w = win.bits[y * win.valid + x];
        let gkb = &mut gk[b * kk..(b + 1) * kk];
        let mut bits = w;
        while bits != 0 {
            let t = bits.trailing_zeros() as usize;
            gkb[t] += dpool;
            bits &= bits - 1;
        }
    }
    (loss, correct)
}

/// Softmax cross-entropy with the forward pass run on real-valued weights
/// (the latents themselves, no sign), averaged over `samples`.
pub fn surrogate_loss(latent: &LatentModel, samples: &[GestureSample]) -> f64 {
    let g = latent.geometry;
    let (bs, k, p) = (g.block_size(), latent.k, g.pooled_size());
    let nb = g.num_blocks();
    let valid = bs - k + 1;
    let feats = g.features();
    let scale = 1.0 / feats as f64;
    let mut total = 0.0;
    for s in samples {
        let mut pooled = vec![0f64; feats];
        for b in 0..nb {
            let kern = &latent.kernels[b * k * k..(b + 1) * k * k];
            let conv = |y: usize, x: usize| -> f64 {
                if y >= valid || x >= valid {
                    return 0.0;
                }
                let mut a = 0.0;
                for dy in 0..k {
                    for dx in 0..k {
                        if s.image.get(y + dy, x + dx) != 0 {
                            a += kern[dy * k + dx] as f64;
                        }
                    }
                }
                a.max(0.0)
            };
            for i in 0..p {
                for j in 0..p {
                    let m = conv(2 * i, 2 * j)
                        .max(conv(2 * i, 2 * j + 1))
                        .max(conv(2 * i + 1, 2 * j))
                        .max(conv(2 * i + 1, 2 * j + 1));
                    pooled[(b * p + i) * p + j] = m;
                }
            }
        }
        let logits: Vec<f64> = (0..latent.class_names.len())
            .map(|c| {
                latent.fc[c * feats..(c + 1) * feats]
                    .iter()
                    .zip(&pooled)
                    .map(|(&w, &v)| w as f64 * v)
                    .sum::<f64>()
                    * scale
            })
            .collect();
        total += softmax_xent(&logits, s.label).0;
    }
    total / samples.len().max(1) as f64
}

/// One SGD step on `batch`. Returns (summed loss, correct count).
pub fn sgd_step(
    latent: &mut LatentModel,
    batch: &[GestureSample],
    lr: f64,
    kernel_lr_scale: f64,
) -> (f64, usize) {
    let model = latent.binarize();
    let scale = 1.0 / latent.geometry.features() as f64;
    let mut gk = vec![0f64; latent.kernels.len()];
    let mut gf = vec![0f64; latent.fc.len()];
    let mut loss = 0.0;
    let mut correct = 0;
    for s in batch {
        let (l, ok) = accumulate_grad(&model, s, scale, &mut gk, &mut gf);
        loss += l;
        correct += ok as usize;
    }
    let n = batch.len().max(1) as f64;
    let step = |w: &mut f32, g: f64, lr: f64| {
        *w = ((*w as f64) - lr * g / n).clamp(-1.0, 1.0) as f32;
    };
    for (w, &g) in latent.kernels.iter_mut().zip(&gk) {
        step(w, g, lr * kernel_lr_scale);
    }
    for (w, &g) in latent.fc.iter_mut().zip(&gf) {
        step(w, g, lr);
    }
    (loss, correct)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: BnnModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,train_acc,test_acc,loss\n");
        for e in &self.log {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                e.epoch, e.train_acc, e.test_acc, e.loss
            ));
        }
        out
    }
}

fn fast_accuracy(model: &BnnModel, samples: &[GestureSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let correct = samples
        .iter()
        .filter(|s| argmax(&training_scores(model, &s.image)).ok() == Some(s.label))
        .count();
    correct as f64 / samples.len() as f64
}

/// Trains on `data.train` and returns the epoch snapshot with the best test
/// accuracy (train accuracy when there is no test split); ties keep the
/// earliest epoch.
pub fn train(data: &DatasetSplit, config: &TrainConfig) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(Error::Training("training split is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Training("batch size must be at least 1".into()));
    }
    if !(config.lr.is_finite() && config.lr >= 0.0) {
        return Err(Error::Training(format!("learning rate {} is invalid", config.lr)));
    }
    let bs = data.train[0].image.height();
    let geometry = PlaneGeometry::with_block_size(bs)?;
    if config.kernel_size == 0 || config.kernel_size > bs.min(8) {
        return Err(Error::Training(format!(
            "kernel size {} unsupported (1..={})",
            config.kernel_size,
            bs.min(8)
        )));
    }
    if let Some(s) = data
        .train
        .iter()
        .chain(&data.test)
        .find(|s| s.image.height() != bs || s.image.width() != bs || s.label >= data.num_classes())
    {
        return Err(Error::Training(format!(
            "sample {:?} does not match the dataset shape",
            s.provenance
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut latent = LatentModel::random(
        geometry,
        config.kernel_size,
        data.class_names.clone(),
        config.init_scale,
        &mut rng,
    );
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut best = latent.binarize();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<GestureSample> = chunk.iter().map(|&i| data.train[i].clone()).collect();
            let (l, c) = sgd_step(&mut latent, &batch, config.lr, config.kernel_lr_scale);
            loss += l;
            correct += c;
        }
        latent.epoch = epoch;
        let snapshot = latent.binarize();
        let n = data.train.len() as f64;
        let test_acc = fast_accuracy(&snapshot, &data.test);
        let train_acc = correct as f64 / n;
        let select = if data.test.is_empty() {
            fast_accuracy(&snapshot, &data.train)
        } else {
            test_acc
        };
        log::info!("epoch {epoch}: loss {:.4} train {train_acc:.4} test {test_acc:.4}", loss / n);
        log.push(EpochLog {
            epoch,
            train_acc,
            test_acc,
            loss: loss / n,
        });
        if select > best_acc {
            best_acc = select;
            best = snapshot;
            best_epoch = epoch;
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        log,
    })
}

/// Accuracy and confusion matrix (rows = true class) under the reference
/// inference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(model: &BnnModel, samples: &[GestureSample]) -> Result<Evaluation> {
    let n = model.num_classes();
    let mut confusion = vec![vec![0usize; n]; n];
    let mut correct = 0;
    for s in samples {
        if s.label >= n {
            return Err(Error::Input(format!("label {} out of range for {n} classes", s.label)));
        }
        let pred = reference_infer(model, &s.image)?.predicted;
        confusion[s.label][pred] += 1;
        correct += (pred == s.label) as usize;
    }
    Ok(Evaluation {
        correct,
        total: samples.len(),
        accuracy: if samples.is_empty() {
            0.0
        } else {
            correct as f64 / samples.len() as f64
        },
        confusion,
    })
}
