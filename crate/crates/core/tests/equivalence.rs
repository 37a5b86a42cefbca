//! Lowered program vs. a direct evaluation of the network written here from
//! the layer definitions.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scampsim::model::default_class_names;
use scampsim::{
    reference_infer, ArrayConfig, BitImage, BnnModel, LoweredRunner, NoiseModel, PlaneGeometry,
};

/// Naive per-pixel evaluation: 16 kernels over the same input, valid
/// top-left-anchored windows only, ReLU, 2×2 max pool, dense layer.
fn oracle_scores(model: &BnnModel, input: &BitImage) -> Vec<i64> {
    let g = model.geometry();
    let (bs, k) = (g.block_size(), model.kernel_size());
    let p = bs / 2;
    let conv = |b: usize, y: usize, x: usize| -> i64 {
        if y + k > bs || x + k > bs {
            return 0;
        }
        let mut a = 0i64;
        for dy in 0..k {
            for dx in 0..k {
                a += input.get(y + dy, x + dx) as i64 * model.kernel_weight(b, dy, dx) as i64;
            }
        }
        a.max(0)
    };
    (0..model.num_classes())
        .map(|c| {
            let mut s = 0i64;
            for b in 0..16 {
                for i in 0..p {
                    for j in 0..p {
                        let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                            .iter()
                            .map(|&(di, dj)| conv(b, 2 * i + di, 2 * j + dj))
                            .max()
                            .unwrap();
                        s += m * model.fc_weight(c, b, i, j) as i64;
                    }
                }
            }
            s
        })
        .collect()
}

fn random_input(bs: usize, seed: u64) -> BitImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density: f64 = rng.random();
    BitImage::from_fn(bs, bs, |_, _| rng.random::<f64>() < density)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn small_planes_match_oracle(
        bs_exp in 1u32..5,
        k_frac in 0.0f64..1.0,
        seed in any::<u64>(),
        input_seed in any::<u64>(),
    ) {
        let bs = 2usize.pow(bs_exp);
        let k = 1 + ((bs - 1) as f64 * k_frac) as usize;
        let g = PlaneGeometry::with_block_size(bs).unwrap();
        let model = BnnModel::random(g, k, default_class_names(), seed).unwrap();
        let input = random_input(bs, input_seed);
        let expect = oracle_scores(&model, &input);
        let reference = reference_infer(&model, &input).unwrap();
        prop_assert_eq!(&reference.scores, &expect);
        let lowered = LoweredRunner::ideal(&model).unwrap().infer(&input, NoiseModel::none()).unwrap();
        prop_assert_eq!(lowered.sums, expect.iter().map(|s| 4 * s).collect::<Vec<_>>());
        prop_assert_eq!(lowered.predicted, reference.predicted);
    }
}

#[test]
fn default_geometry_matches_oracle() {
    for seed in 0..6u64 {
        let model = BnnModel::random(PlaneGeometry::default(), 1 + (seed as usize % 5), default_class_names(), seed)
            .unwrap();
        let runner = LoweredRunner::ideal(&model).unwrap();
        let input = random_input(64, seed + 100);
        let expect = oracle_scores(&model, &input);
        assert_eq!(reference_infer(&model, &input).unwrap().scores, expect);
        let sums = runner.infer(&input, NoiseModel::none()).unwrap().sums;
        assert_eq!(sums, expect.iter().map(|s| 4 * s).collect::<Vec<_>>());
    }
}

#[test]
fn all_black_input_predicts_first_class() {
    let model = BnnModel::default_model();
    let out = LoweredRunner::ideal(&model)
        .unwrap()
        .infer(&BitImage::zeros(64, 64), NoiseModel::none())
        .unwrap();
    assert_eq!(out.sums, vec![0, 0, 0]);
    assert_eq!(out.predicted, 0);
}

#[test]
fn noisy_sums_scatter_around_exact() {
    let model = BnnModel::default_model();
    let sigma = 8.0;
    let config = ArrayConfig::new(PlaneGeometry::default());
    let runner = LoweredRunner::new(&model, config).unwrap();
    let input = random_input(64, 3);
    let exact = runner.infer(&input, NoiseModel::none()).unwrap().sums;
    let mut state = runner.new_state(NoiseModel::gaussian(sigma, 5)).unwrap();
    let n = 300;
    let mut dev = vec![0f64; n * 3];
    for i in 0..n {
        let s = runner.run_on(&mut state, &input).unwrap().sums;
        for c in 0..3 {
            dev[i * 3 + c] = (s[c] - exact[c]) as f64;
        }
    }
    let mean = dev.iter().sum::<f64>() / dev.len() as f64;
    let var = dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (dev.len() - 1) as f64;
    // Rounding adds 1/12 to the variance.
    let expect_var = sigma * sigma + 1.0 / 12.0;
    assert!(mean.abs() < 4.0 * sigma / (dev.len() as f64).sqrt(), "mean {mean}");
    assert!((var / expect_var - 1.0).abs() < 0.15, "var {var}");
}
