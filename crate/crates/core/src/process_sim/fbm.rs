use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{simulate_with, PathEnsemble, ProcessModel, SimError, TimeGrid};

fn fbm_cov(t: f64, s: f64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
}

/// Exact fBm sampling by Cholesky factorisation of the covariance on `t_1..t_N`.
/// Coordinates of a `dim`-dimensional path are independent.
pub fn simulate_fbm(
    hurst: f64,
    dim: usize,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, SimError> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(SimError::Param(format!("Hurst index must lie in (0,1), got {hurst}")));
    }
    if dim == 0 {
        return Err(SimError::Param("dimension must be positive".into()));
    }
    grid.validate()?;
    let n = grid.steps;
    let times = grid.times();
    let cov = DMatrix::from_fn(n, n, |i, j| fbm_cov(times[i + 1], times[j + 1], hurst));
    let chol = cov
        .cholesky()
        .ok_or(SimError::Factorization { hurst, steps: n })?;
    let lower = chol.l();
    simulate_with(
        grid,
        dim,
        n_paths,
        seed,
        ProcessModel::Fbm { hurst, dim },
        |rng, path| {
            for j in 0..dim {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &lower * z;
                path[j] = 0.0;
                for k in 0..n {
                    path[(k + 1) * dim + j] = x[k];
                }
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn starts_at_zero() {
        for h in [0.2, 0.5, 0.8] {
            let e = simulate_fbm(h, 2, TimeGrid::new(1.0, 16).unwrap(), 50, 3).unwrap();
            assert!((0..50).all(|m| e.value(m, 0) == [0.0, 0.0]));
        }
    }

    #[test]
    fn brownian_case_variance() {
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let e = simulate_fbm(0.5, 1, grid, 40_000, 17).unwrap();
        let xs = e.marginal(8, 0);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let v = mean(&sq);
        let var_sq = sq.iter().map(|s| (s - v).powi(2)).sum::<f64>() / (sq.len() - 1) as f64;
        let se = (var_sq / sq.len() as f64).sqrt();
        assert!((v - 2.0).abs() < 3.0 * se, "var {v} se {se}");
    }

    #[test]
    fn covariance_at_h07() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let e = simulate_fbm(0.7, 1, grid, 40_000, 23).unwrap();
        let a = e.marginal(4, 0);
        let b = e.marginal(8, 0);
        let prods: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let c = mean(&prods);
        let vp = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (prods.len() - 1) as f64;
        let se = (vp / prods.len() as f64).sqrt();
        let expect = 0.5 * (0.5f64.powf(1.4) + 1.0 - 0.5f64.powf(1.4));
        assert!((c - expect).abs() < 3.0 * se, "cov {c} expect {expect} se {se}");
    }

    #[test]
    fn rejects_hurst_out_of_range() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(simulate_fbm(0.0, 1, g, 1, 0).is_err());
        assert!(simulate_fbm(1.0, 1, g, 1, 0).is_err());
    }
}
