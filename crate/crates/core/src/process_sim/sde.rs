use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{simulate_with, PathEnsemble, ProcessModel, SimError, TimeGrid};

/// Built-in drift coefficients `b: R^d → R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DriftId {
    /// `b(x) = 0`
    Zero,
    /// `b(x) = −x` (Ornstein–Uhlenbeck)
    MeanReverting,
}

/// Built-in volatility coefficients `v: R^d → R^{d×d}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum VolId {
    /// `v(x) = I`
    Identity,
}

impl FromStr for DriftId {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "zero" => Ok(DriftId::Zero),
            "mean_reverting" | "ou" => Ok(DriftId::MeanReverting),
            other => Err(SimError::UnknownId(other.to_string())),
        }
    }
}

impl FromStr for VolId {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "identity" | "unit" => Ok(VolId::Identity),
            other => Err(SimError::UnknownId(other.to_string())),
        }
    }
}

impl DriftId {
    fn apply(self, x: &[f64], out: &mut [f64]) {
        match self {
            DriftId::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            DriftId::MeanReverting => out.iter_mut().zip(x).for_each(|(o, v)| *o = -v),
        }
    }
}

/// Euler–Maruyama for `dX = b(X)dt + v(X)dW`, `X_0 = x0`.
pub fn simulate_sde(
    drift: DriftId,
    vol: VolId,
    x0: &[f64],
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, SimError> {
    let dim = x0.len();
    if dim == 0 {
        return Err(SimError::Param("x0 must have positive dimension".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SimError::Param("x0 must be finite".into()));
    }
    grid.validate()?;
    let dt = grid.dt();
    let sq = dt.sqrt();
    simulate_with(
        grid,
        dim,
        n_paths,
        seed,
        ProcessModel::Sde { drift, vol, x0: x0.to_vec() },
        |rng, path| {
            path[..dim].copy_from_slice(x0);
            let mut b = vec![0.0; dim];
            for k in 0..grid.steps {
                let (head, tail) = path.split_at_mut((k + 1) * dim);
                let x = &head[k * dim..];
                drift.apply(x, &mut b);
                let next = &mut tail[..dim];
                for j in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    let diffusion = match vol {
                        VolId::Identity => sq * z,
                    };
                    next[j] = x[j] + b[j] * dt + diffusion;
                }
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        assert_eq!("zero".parse::<DriftId>().unwrap(), DriftId::Zero);
        assert_eq!("ou".parse::<DriftId>().unwrap(), DriftId::MeanReverting);
        assert!(matches!("cubic".parse::<DriftId>(), Err(SimError::UnknownId(_))));
        assert!(matches!("skew".parse::<VolId>(), Err(SimError::UnknownId(_))));
    }

    #[test]
    fn brownian_mean_zero() {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let e = simulate_sde(DriftId::Zero, VolId::Identity, &[0.0], g, 20_000, 4).unwrap();
        let xs = e.marginal(16, 0);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 3.0 / (20_000f64).sqrt(), "{mean}");
    }

    #[test]
    fn ornstein_uhlenbeck_variance() {
        // Var(X_T | x0 = 0) = (1 − e^{−2T})/2 for b(x) = −x, v = 1.
        let t = 1.0;
        let g = TimeGrid::new(t, 400).unwrap();
        let e = simulate_sde(DriftId::MeanReverting, VolId::Identity, &[0.0], g, 20_000, 8).unwrap();
        let xs = e.marginal(400, 0);
        let n = xs.len() as f64;
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let v = sq.iter().sum::<f64>() / n;
        let se = (sq.iter().map(|s| (s - v).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let expect = (1.0 - (-2.0 * t).exp()) / 2.0;
        assert!((v - expect).abs() < 3.0 * se, "var {v} expect {expect} se {se}");
    }

    #[test]
    fn bessel_inverse_mean_below_one() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let e = simulate_sde(DriftId::Zero, VolId::Identity, &[1.0, 0.0, 0.0], g, 20_000, 12).unwrap();
        let inv: Vec<f64> = (0..e.n_paths)
            .map(|m| 1.0 / crate::numeric::norm(e.value(m, 50)))
            .collect();
        let mean = inv.iter().sum::<f64>() / inv.len() as f64;
        assert!(mean < 1.0, "E[1/R_T] = {mean}");
    }
}
