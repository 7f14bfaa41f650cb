use rand::Rng;
use rand_distr::StandardNormal;

use super::{simulate_with, PathEnsemble, ProcessModel, SimError, TimeGrid};

/// The piecewise-linear scale map `s_α(x) = (1−α)x` for `x ≥ 0`, `αx` for `x < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewMap {
    pub alpha: f64,
}

impl SkewMap {
    pub fn from_beta(beta: f64) -> Result<Self, SimError> {
        if !(beta.abs() < 1.0) {
            return Err(SimError::Param(format!("skewness |beta| must be < 1, got {beta}")));
        }
        Ok(Self { alpha: (beta + 1.0) / 2.0 })
    }

    pub fn forward(&self, x: f64) -> f64 {
        if x >= 0.0 {
            (1.0 - self.alpha) * x
        } else {
            self.alpha * x
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if y >= 0.0 {
            y / (1.0 - self.alpha)
        } else {
            y / self.alpha
        }
    }

    /// Diffusion coefficient of `Y = s_α(X)`. At `y = 0` the Euler step uses `α`.
    pub fn vol(&self, y: f64) -> f64 {
        if y > 0.0 {
            1.0 - self.alpha
        } else {
            self.alpha
        }
    }
}

/// Skew Brownian motion `X = W + βL⁰` from 0, via Euler on `dY = f(Y)dW` and `X = s_α^{-1}(Y)`.
pub fn simulate_skew_bm(
    beta: f64,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, SimError> {
    let map = SkewMap::from_beta(beta)?;
    grid.validate()?;
    let sq = grid.dt().sqrt();
    simulate_with(grid, 1, n_paths, seed, ProcessModel::SkewBm { beta }, |rng, path| {
        let mut y = 0.0f64;
        path[0] = 0.0;
        for k in 0..grid.steps {
            let z: f64 = rng.sample(StandardNormal);
            y += map.vol(y) * sq * z;
            path[k + 1] = map.inverse(y);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_map_round_trip() {
        let m = SkewMap::from_beta(0.5).unwrap();
        assert_eq!(m.alpha, 0.75);
        for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            assert_eq!(m.inverse(m.forward(x)), x);
        }
    }

    #[test]
    fn rejects_beta_outside_unit_interval() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(simulate_skew_bm(1.0, g, 1, 0).is_err());
        assert!(simulate_skew_bm(-1.2, g, 1, 0).is_err());
    }

    #[test]
    fn symmetric_case_mean_zero() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let e = simulate_skew_bm(0.0, g, 10_000, 2).unwrap();
        let xs = e.marginal(100, 0);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt(), "{mean}");
    }

    #[test]
    fn occupation_probability_matches_alpha() {
        // P(X_T > 0) = α = 0.75 for β = 0.5 (Euler bias ≈ 0.23·√Δt at N = 1000).
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let e = simulate_skew_bm(0.5, g, 10_000, 31).unwrap();
        let pos = e.marginal(1000, 0).iter().filter(|x| **x > 0.0).count() as f64 / 10_000.0;
        let se = (0.75f64 * 0.25 / 10_000.0).sqrt();
        assert!((pos - 0.75).abs() < 3.0 * se, "P(X_T>0) = {pos}");
    }
}
