//! Readout error model for the global summation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::plane::AnalogPlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
}

/// Additive error on every global-sum readout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Standard deviation in analog units.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        }
    }

    /// A zero-sigma Gaussian model behaves exactly like `none`.
    pub fn is_noiseless(&self) -> bool {
        self.kind == NoiseKind::None || self.sigma == 0.0
    }
}

/// A noise model together with its RNG stream.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    model: NoiseModel,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(model: NoiseModel) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
        }
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    /// Integer error for one readout.
    pub fn draw(&mut self) -> i64 {
        match self.model.kind {
            NoiseKind::None => 0,
            NoiseKind::Gaussian => {
                if self.model.sigma <= 0.0 || !self.model.sigma.is_finite() {
                    return 0;
                }
                let normal = Normal::new(0.0, self.model.sigma).expect("finite positive sigma");
                normal.sample(&mut self.rng).round() as i64
            }
        }
    }
}

/// Sum of every pixel of `plane` plus one draw of readout error.
pub fn global_sum(plane: &AnalogPlane, noise: &mut NoiseSource) -> i64 {
    let exact: i64 = plane.values().iter().map(|&v| v as i64).sum();
    exact + noise.draw()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlaneGeometry;
    use crate::plane::Saturation;

    fn plane_with(values: Vec<i32>) -> AnalogPlane {
        let g = PlaneGeometry::with_block_size(2).unwrap();
        AnalogPlane::from_values(g, Saturation::Ideal, values).unwrap()
    }

    #[test]
    fn exact_without_noise() {
        let g = PlaneGeometry::with_block_size(2).unwrap();
        let mut src = NoiseSource::new(NoiseModel::none());
        assert_eq!(global_sum(&AnalogPlane::zeros(g, Saturation::Ideal), &mut src), 0);
        let mut v = vec![0; g.pixels()];
        v[7] = 5;
        assert_eq!(global_sum(&plane_with(v), &mut src), 5);
    }

    #[test]
    fn gaussian_is_reproducible_under_seed() {
        let p = plane_with(vec![1; 64]);
        let run = |seed| {
            let mut src = NoiseSource::new(NoiseModel::gaussian(10.0, seed));
            (0..20).map(|_| global_sum(&p, &mut src)).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
        let draws = run(3);
        assert!(draws.iter().any(|&s| s != 64));
    }
}
