//! The binary CNN: one replicated ±1 convolution stage, ReLU, 2×2 max-pool
//! and a ±1 fully connected readout. [`reference_infer`] is the dense,
//! loop-level semantics every other execution path is checked against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;
use crate::plane::BitImage;

pub const WEIGHTS_VERSION: u32 = 1;
pub const DEFAULT_KERNEL_SIZE: usize = 4;
pub const DEFAULT_MODEL_SEED: u64 = 0x5CA3_5EED;

pub fn default_class_names() -> Vec<String> {
    ["rock", "paper", "scissors"].map(String::from).to_vec()
}

/// Binary CNN weights and shape.
///
/// Kernel `b` is applied to the replica in block `b`. Kernel weights are
/// stored row-major (`dy` outer). FC weights for a class are indexed by
/// `block·p² + row·p + col` over the `p×p` pooled map of each block, with
/// `p = block_size / 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BnnModel {
    geometry: PlaneGeometry,
    k: usize,
    kernels: Vec<Vec<i8>>,
    class_names: Vec<String>,
    fc: Vec<Vec<i8>>,
}

fn check_sign(field: impl FnOnce() -> String, w: i64) -> Result<i8> {
    match w {
        -1 | 1 => Ok(w as i8),
        other => Err(Error::weights(field(), format!("weight {other} is not -1 or +1"))),
    }
}

impl BnnModel {
    pub fn new(
        geometry: PlaneGeometry,
        k: usize,
        kernels: Vec<Vec<i8>>,
        class_names: Vec<String>,
        fc: Vec<Vec<i8>>,
    ) -> Result<Self> {
        if k == 0 || k > geometry.block_size() {
            return Err(Error::weights(
                "k",
                format!("kernel size {k} must be in 1..={}", geometry.block_size()),
            ));
        }
        if kernels.len() != geometry.num_blocks() {
            return Err(Error::weights(
                "kernels",
                format!("expected {} kernels, found {}", geometry.num_blocks(), kernels.len()),
            ));
        }
        for (b, kern) in kernels.iter().enumerate() {
            if kern.len() != k * k {
                return Err(Error::weights(
                    format!("kernels[{b}]"),
                    format!("expected {} weights, found {}", k * k, kern.len()),
                ));
            }
            for (i, &w) in kern.iter().enumerate() {
                check_sign(|| format!("kernels[{b}][{}][{}]", i / k, i % k), w as i64)?;
            }
        }
        check_class_names(&class_names)?;
        if fc.len() != class_names.len() {
            return Err(Error::weights(
                "fc",
                format!("{} weight vectors for {} classes", fc.len(), class_names.len()),
            ));
        }
        for (c, w) in fc.iter().enumerate() {
            if w.len() != geometry.features() {
                return Err(Error::weights(
                    format!("fc[{c}]"),
                    format!("expected {} weights, found {}", geometry.features(), w.len()),
                ));
            }
            for (i, &x) in w.iter().enumerate() {
                check_sign(|| format!("fc[{c}] element {i}"), x as i64)?;
            }
        }
        Ok(Self {
            geometry,
            k,
            kernels,
            class_names,
            fc,
        })
    }

    /// Uniform random ±1 weights.
    pub fn random(
        geometry: PlaneGeometry,
        k: usize,
        class_names: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sign = || if rng.random::<bool>() { 1i8 } else { -1i8 };
        let kernels = (0..geometry.num_blocks())
            .map(|_| (0..k * k).map(|_| sign()).collect())
            .collect();
        let fc = (0..class_names.len())
            .map(|_| (0..geometry.features()).map(|_| sign()).collect())
            .collect();
        Self::new(geometry, k, kernels, class_names, fc)
    }

    /// The untrained model used when no weights file is given: random ±1
    /// weights from [`DEFAULT_MODEL_SEED`] at the default geometry.
    pub fn default_model() -> Self {
        Self::random(
            PlaneGeometry::default(),
            DEFAULT_KERNEL_SIZE,
            default_class_names(),
            DEFAULT_MODEL_SEED,
        )
        .expect("default shape is valid")
    }

    pub fn geometry(&self) -> &PlaneGeometry {
        &self.geometry
    }

    pub fn kernel_size(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn kernel(&self, block: usize) -> &[i8] {
        &self.kernels[block]
    }

    pub fn kernels(&self) -> &[Vec<i8>] {
        &self.kernels
    }

    #[inline]
    pub fn kernel_weight(&self, block: usize, dy: usize, dx: usize) -> i8 {
        self.kernels[block][dy * self.k + dx]
    }

    pub fn fc(&self, class: usize) -> &[i8] {
        &self.fc[class]
    }

    #[inline]
    pub fn fc_weight(&self, class: usize, block: usize, row: usize, col: usize) -> i8 {
        let p = self.geometry.pooled_size();
        self.fc[class][block * p * p + row * p + col]
    }

    /// Same model with every FC weight negated.
    pub fn with_negated_fc(&self) -> Self {
        let mut m = self.clone();
        for w in m.fc.iter_mut().flatten() {
            *w = -*w;
        }
        m
    }

    pub fn to_document(&self) -> WeightsDocument {
        let k = self.k;
        let p = self.geometry.pooled_size();
        WeightsDocument {
            version: WEIGHTS_VERSION,
            k,
            block_size: self.geometry.block_size(),
            block_grid: self.geometry.block_grid(),
            classes: self.class_names.clone(),
            kernels: self
                .kernels
                .iter()
                .map(|kern| kern.chunks(k).map(|row| row.iter().map(|&w| w as i64).collect()).collect())
                .collect(),
            fc: self
                .fc
                .iter()
                .map(|w| {
                    w.chunks(p * p)
                        .map(|blk| blk.chunks(p).map(|row| row.iter().map(|&x| x as i64).collect()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &WeightsDocument) -> Result<Self> {
        if doc.version != WEIGHTS_VERSION {
            return Err(Error::weights(
                "version",
                format!("unsupported version {}, expected {WEIGHTS_VERSION}", doc.version),
            ));
        }
        let geometry = PlaneGeometry::new(doc.block_grid, doc.block_size)
            .map_err(|e| Error::weights("block_size", e.to_string()))?;
        let k = doc.k;
        if k == 0 || k > geometry.block_size() {
            return Err(Error::weights("k", format!("kernel size {k} out of range")));
        }
        if doc.kernels.len() != geometry.num_blocks() {
            return Err(Error::weights(
                "kernels",
                format!(
                    "count mismatch: expected {} kernels, found {}",
                    geometry.num_blocks(),
                    doc.kernels.len()
                ),
            ));
        }
        let mut kernels = Vec::with_capacity(doc.kernels.len());
        for (b, rows) in doc.kernels.iter().enumerate() {
            if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                return Err(Error::weights(
                    format!("kernels[{b}]"),
                    format!("count mismatch: expected {k}x{k}"),
                ));
            }
            let mut kern = Vec::with_capacity(k * k);
            for (dy, row) in rows.iter().enumerate() {
                for (dx, &w) in row.iter().enumerate() {
                    kern.push(check_sign(|| format!("kernels[{b}][{dy}][{dx}]"), w)?);
                }
            }
            kernels.push(kern);
        }
        check_class_names(&doc.classes)?;
        if doc.fc.len() != doc.classes.len() {
            return Err(Error::weights(
                "fc",
                format!(
                    "count mismatch: {} weight sets for {} classes",
                    doc.fc.len(),
                    doc.classes.len()
                ),
            ));
        }
        let p = geometry.pooled_size();
        let mut fc = Vec::with_capacity(doc.fc.len());
        for (c, blocks) in doc.fc.iter().enumerate() {
            let shape_ok = blocks.len() == geometry.num_blocks()
                && blocks.iter().all(|b| b.len() == p && b.iter().all(|r| r.len() == p));
            if !shape_ok {
                return Err(Error::weights(
                    format!("fc[{c}]"),
                    format!("count mismatch: expected {}x{p}x{p}", geometry.num_blocks()),
                ));
            }
            let mut w = Vec::with_capacity(geometry.features());
            for (b, rows) in blocks.iter().enumerate() {
                for (i, row) in rows.iter().enumerate() {
                    for (j, &x) in row.iter().enumerate() {
                        w.push(check_sign(|| format!("fc[{c}][{b}][{i}][{j}]"), x)?);
                    }
                }
            }
            fc.push(w);
        }
        Self::new(geometry, k, kernels, doc.classes.clone(), fc)
    }

    pub fn save_weights(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("weights serialize")
    }

    pub fn load_weights(text: &str) -> Result<Self> {
        let doc: WeightsDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

fn check_class_names(names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::weights("classes", "at least one class is required"));
    }
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() || n.chars().any(|c| c.is_whitespace() || c == '#' || c == ',') {
            return Err(Error::weights(
                format!("classes[{i}]"),
                format!("class name `{n}` must be a bare word"),
            ));
        }
        if names[..i].contains(n) {
            return Err(Error::weights(format!("classes[{i}]"), format!("duplicate class `{n}`")));
        }
    }
    Ok(())
}

/// On-disk weights layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsDocument {
    pub version: u32,
    pub k: usize,
    pub block_size: usize,
    pub block_grid: usize,
    pub classes: Vec<String>,
    /// `[block][dy][dx]`
    pub kernels: Vec<Vec<Vec<i64>>>,
    /// `[class][block][row][col]` over the pooled map.
    pub fc: Vec<Vec<Vec<Vec<i64>>>>,
}

/// A stack of per-block feature maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<i32>,
}

impl FeatureTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0; channels * height * width],
        }
    }

    #[inline]
    pub fn get(&self, ch: usize, row: usize, col: usize) -> i32 {
        self.data[(ch * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, row: usize, col: usize, v: i32) {
        self.data[(ch * self.height + row) * self.width + col] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassScores {
    pub scores: Vec<i64>,
    pub predicted: usize,
}

/// Every intermediate tensor of one reference inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceTrace {
    /// Convolution output, zero wherever the window leaves the block.
    pub conv: FeatureTensor,
    pub relu: FeatureTensor,
    /// De-replicated pooled map, `block_size/2` per side.
    pub pooled: FeatureTensor,
    pub scores: ClassScores,
}

/// Smallest index attaining the maximum.
pub fn argmax(scores: &[i64]) -> Result<usize> {
    let mut best: Option<(usize, i64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptyScores)
}

fn check_input(model: &BnnModel, input: &BitImage) -> Result<()> {
    let bs = model.geometry.block_size();
    if input.height() != bs || input.width() != bs {
        return Err(Error::Input(format!(
            "input is {}x{}, model expects {bs}x{bs}",
            input.height(),
            input.width()
        )));
    }
    Ok(())
}

pub fn reference_infer(model: &BnnModel, input: &BitImage) -> Result<ClassScores> {
    Ok(reference_trace(model, input)?.scores)
}

pub fn reference_trace(model: &BnnModel, input: &BitImage) -> Result<InferenceTrace> {
    check_input(model, input)?;
    let g = &model.geometry;
    let (bs, k, p, nb) = (g.block_size(), model.k, g.pooled_size(), g.num_blocks());
    let valid = bs - k + 1;

    let mut conv = FeatureTensor::zeros(nb, bs, bs);
    for b in 0..nb {
        for y in 0..valid {
            for x in 0..valid {
                let mut acc = 0i32;
                for dy in 0..k {
                    for dx in 0..k {
                        if input.get(y + dy, x + dx) != 0 {
                            acc += model.kernel_weight(b, dy, dx) as i32;
                        }
                    }
                }
                conv.set(b, y, x, acc);
            }
        }
    }

    let mut relu = conv.clone();
    for v in relu.data.iter_mut() {
        *v = (*v).max(0);
    }

    let mut pooled = FeatureTensor::zeros(nb, p, p);
    for b in 0..nb {
        for i in 0..p {
            for j in 0..p {
                let m = relu
                    .get(b, 2 * i, 2 * j)
                    .max(relu.get(b, 2 * i, 2 * j + 1))
                    .max(relu.get(b, 2 * i + 1, 2 * j))
                    .max(relu.get(b, 2 * i + 1, 2 * j + 1));
                pooled.set(b, i, j, m);
            }
        }
    }

    let scores: Vec<i64> = (0..model.num_classes())
        .map(|c| {
            model.fc[c]
                .iter()
                .zip(&pooled.data)
                .map(|(&w, &v)| w as i64 * v as i64)
                .sum()
        })
        .collect();
    let predicted = argmax(&scores)?;
    Ok(InferenceTrace {
        conv,
        relu,
        pooled,
        scores: ClassScores { scores, predicted },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small_geometry() -> PlaneGeometry {
        PlaneGeometry::with_block_size(8).unwrap()
    }

    fn random_input(bs: usize, seed: u64) -> BitImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BitImage::from_fn(bs, bs, |_, _| rng.random::<bool>())
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(argmax(&[5, 5, 3]).unwrap(), 0);
        assert_eq!(argmax(&[1, 9, 2]).unwrap(), 1);
        assert_eq!(argmax(&[-4, -2, -7]).unwrap(), 1);
        assert!(matches!(argmax(&[]), Err(Error::EmptyScores)));
    }

    #[test]
    fn all_zero_input_predicts_class_zero() {
        let m = BnnModel::default_model();
        let t = reference_trace(&m, &BitImage::zeros(64, 64)).unwrap();
        assert!(t.conv.data.iter().all(|&v| v == 0));
        assert_eq!(t.scores.scores, vec![0, 0, 0]);
        assert_eq!(t.scores.predicted, 0);
    }

    #[test]
    fn all_ones_with_positive_kernels() {
        let g = PlaneGeometry::default();
        let kernels = vec![vec![1i8; 16]; 16];
        let fc = vec![vec![1i8; g.features()]; 3];
        let m = BnnModel::new(g, 4, kernels, default_class_names(), fc).unwrap();
        let ones = BitImage::from_fn(64, 64, |_, _| true);
        let t = reference_trace(&m, &ones).unwrap();
        for b in 0..16 {
            assert_eq!(t.conv.get(b, 10, 10), 16);
            assert_eq!(t.conv.get(b, 60, 60), 16);
            assert_eq!(t.conv.get(b, 61, 0), 0);
            assert_eq!(t.pooled.get(b, 5, 5), 16);
        }
    }

    #[test]
    fn rejects_wrong_input_size() {
        let m = BnnModel::default_model();
        assert!(matches!(
            reference_infer(&m, &BitImage::zeros(32, 32)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn weights_round_trip() {
        let m = BnnModel::random(small_geometry(), 3, vec!["a".into(), "b".into()], 9).unwrap();
        assert_eq!(BnnModel::load_weights(&m.save_weights()).unwrap(), m);
        let d = BnnModel::default_model();
        assert_eq!(BnnModel::load_weights(&d.save_weights()).unwrap(), d);
    }

    #[test]
    fn zero_weight_is_rejected_by_field() {
        let m = BnnModel::random(small_geometry(), 2, vec!["a".into()], 1).unwrap();
        let mut doc = m.to_document();
        doc.kernels[3][1][0] = 0;
        let err = BnnModel::from_document(&doc).unwrap_err();
        assert!(err.to_string().contains("kernels[3][1][0]"), "{err}");

        let mut doc = m.to_document();
        doc.fc[0][2][1][3] = 0;
        let err = BnnModel::from_document(&doc).unwrap_err();
        assert!(err.to_string().contains("fc[0][2][1][3]"), "{err}");
    }

    #[test]
    fn fifteen_kernels_is_a_count_mismatch() {
        let mut doc = BnnModel::default_model().to_document();
        doc.kernels.pop();
        let err = BnnModel::from_document(&doc).unwrap_err();
        assert!(matches!(&err, Error::Weights { field, .. } if field == "kernels"));
        assert!(err.to_string().contains("count mismatch"));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut doc = BnnModel::default_model().to_document();
        doc.version = 7;
        let err = BnnModel::from_document(&doc).unwrap_err();
        assert!(matches!(&err, Error::Weights { field, .. } if field == "version"));
    }

    #[test]
    fn bad_class_names_are_rejected() {
        let g = small_geometry();
        assert!(BnnModel::random(g, 2, vec!["a b".into()], 0).is_err());
        assert!(BnnModel::random(g, 2, vec!["a".into(), "a".into()], 0).is_err());
        assert!(BnnModel::random(g, 2, vec![], 0).is_err());
    }

    proptest! {
        #[test]
        fn negating_fc_negates_scores(seed in any::<u64>(), input_seed in any::<u64>()) {
            let m = BnnModel::random(small_geometry(), 3, default_class_names(), seed).unwrap();
            let x = random_input(8, input_seed);
            let s = reference_infer(&m, &x).unwrap().scores;
            let n = reference_infer(&m.with_negated_fc(), &x).unwrap().scores;
            prop_assert_eq!(n, s.iter().map(|v| -v).collect::<Vec<_>>());
        }

        #[test]
        fn conv_outputs_are_bounded(seed in any::<u64>(), input_seed in any::<u64>(), k in 1usize..6) {
            let m = BnnModel::random(small_geometry(), k, vec!["x".into()], seed).unwrap();
            let t = reference_trace(&m, &random_input(8, input_seed)).unwrap();
            let bound = (k * k) as i32;
            prop_assert!(t.conv.data.iter().all(|v| (-bound..=bound).contains(v)));
            prop_assert!(t.relu.data.iter().all(|&v| v >= 0));
        }

        #[test]
        fn scaling_scores_keeps_argmax(scores in proptest::collection::vec(-1000i64..1000, 1..8), f in 1i64..10) {
            let scaled: Vec<i64> = scores.iter().map(|s| s * f).collect();
            prop_assert_eq!(argmax(&scores).unwrap(), argmax(&scaled).unwrap());
        }
    }
}
