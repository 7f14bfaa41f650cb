//! Path ensembles of sticky processes on a uniform time grid.
//!
//! Every path draws from its own ChaCha stream seeded by
//! [`derive_seed`](crate::numeric::derive_seed)`(seed, path_index)`, so an
//! ensemble is bit-identical regardless of how many rayon threads produced it.

mod bessel;
mod classify;
mod compose;
mod fbm;
pub mod io;
mod levy;
mod sde;
mod skew;

pub use bessel::{bessel_inverse_mean, simulate_strict_local_martingale, BesselTable, TimeChange};
pub use classify::{classify_levy_stickiness, SmallJumpIntegral, Stickiness, StickinessVerdict};
pub use compose::{compose, ComposeFn};
pub use fbm::simulate_fbm;
pub use levy::{simulate_levy, JumpAtom, LevyParams};
pub use sde::{simulate_sde, DriftId, VolId};
pub use skew::{simulate_skew_bm, SkewMap};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("unknown registry id `{0}`")]
    UnknownId(String),
    #[error(
        "fBm covariance factorization failed for H={hurst} with {steps} steps; \
         use fewer steps or keep H away from 0 and 1"
    )]
    Factorization { hurst: f64, steps: usize },
    #[error("time change value {value} outside tabulated range [{min}, 1]; extend the table horizon or raise m")]
    TimeChangeRange { value: f64, min: f64 },
    #[error("ensemble mismatch: {0}")]
    Mismatch(String),
    #[error("io: {0}")]
    Io(String),
}

/// Uniform grid `t_i = i·T/N`, `i = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self, SimError> {
        let g = Self { horizon, steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::Grid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(SimError::Grid("steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }
}

/// Description of the model that produced an ensemble; stored in file headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "process", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessModel {
    Constant { value: Vec<f64> },
    Levy { params: LevyParams },
    Fbm { hurst: f64, dim: usize },
    Sde { drift: DriftId, vol: VolId, x0: Vec<f64> },
    SkewBm { beta: f64 },
    StrictLocalMartingale { time_change: TimeChange, table: BesselTable },
    /// `S ≡ 0` before the horizon, `S_T` uniform on `atoms` equispaced points of `[0, 1]`.
    TerminalUniform { atoms: usize },
    Composed { f: ComposeFn, x: Box<ProcessModel>, l: Box<ProcessModel> },
}

impl ProcessModel {
    /// Whether the process is Markov in its own filtration.
    pub fn is_markov(&self) -> bool {
        match self {
            ProcessModel::Fbm { hurst, .. } => (*hurst - 0.5).abs() < 1e-15,
            ProcessModel::StrictLocalMartingale { .. } => true,
            ProcessModel::Composed { .. } => false,
            _ => true,
        }
    }
}

/// `M` sampled `d`-dimensional paths on a [`TimeGrid`].
///
/// Values are stored path-major: `data[(m·(N+1) + k)·d + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub dim: usize,
    pub n_paths: usize,
    pub data: Vec<f64>,
    pub seeds: Vec<u64>,
    pub model: ProcessModel,
}

impl PathEnsemble {
    pub fn new(
        grid: TimeGrid,
        dim: usize,
        data: Vec<f64>,
        seeds: Vec<u64>,
        model: ProcessModel,
    ) -> Result<Self, SimError> {
        grid.validate()?;
        if dim == 0 {
            return Err(SimError::Param("dimension must be positive".into()));
        }
        let per_path = (grid.steps + 1) * dim;
        if !data.len().is_multiple_of(per_path) || data.is_empty() {
            return Err(SimError::Mismatch(format!(
                "data length {} is not a positive multiple of (N+1)·d = {per_path}",
                data.len()
            )));
        }
        let n_paths = data.len() / per_path;
        if seeds.len() != n_paths {
            return Err(SimError::Mismatch(format!(
                "{} seeds for {n_paths} paths",
                seeds.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(SimError::Param(format!("non-finite value at flat index {bad}")));
        }
        Ok(Self { grid, dim, n_paths, data, seeds, model })
    }

    fn stride(&self) -> usize {
        (self.grid.steps + 1) * self.dim
    }

    pub fn path(&self, m: usize) -> &[f64] {
        let s = self.stride();
        &self.data[m * s..(m + 1) * s]
    }

    pub fn value(&self, m: usize, k: usize) -> &[f64] {
        let off = m * self.stride() + k * self.dim;
        &self.data[off..off + self.dim]
    }

    /// Coordinate `j` at time index `k` across all paths.
    pub fn marginal(&self, k: usize, j: usize) -> Vec<f64> {
        (0..self.n_paths).map(|m| self.value(m, k)[j]).collect()
    }

    pub fn is_markov(&self) -> bool {
        self.model.is_markov()
    }
}

/// Fills `n_paths` paths in parallel; `fill(rng, path)` writes one path of
/// length `(N+1)·dim`.
pub(crate) fn simulate_with<F>(
    grid: TimeGrid,
    dim: usize,
    n_paths: usize,
    seed: u64,
    model: ProcessModel,
    fill: F,
) -> Result<PathEnsemble, SimError>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    grid.validate()?;
    if n_paths == 0 {
        return Err(SimError::Param("n_paths must be at least 1".into()));
    }
    let stride = (grid.steps + 1) * dim;
    let seeds: Vec<u64> = (0..n_paths as u64).map(|m| derive_seed(seed, m)).collect();
    let mut data = vec![0.0; n_paths * stride];
    data.par_chunks_mut(stride)
        .zip(seeds.par_iter())
        .for_each(|(path, &s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            fill(&mut rng, path);
        });
    PathEnsemble::new(grid, dim, data, seeds, model)
}

/// Deterministic ensemble of `n_paths` constant paths.
pub fn constant_ensemble(value: &[f64], grid: TimeGrid, n_paths: usize) -> Result<PathEnsemble, SimError> {
    let dim = value.len();
    if dim == 0 {
        return Err(SimError::Param("constant value must have positive dimension".into()));
    }
    simulate_with(
        grid,
        dim,
        n_paths,
        0,
        ProcessModel::Constant { value: value.to_vec() },
        |_, path| {
            for chunk in path.chunks_mut(dim) {
                chunk.copy_from_slice(value);
            }
        },
    )
}

/// One path per atom: zero before the horizon, then `i/(atoms−1)` at `T`.
pub fn terminal_uniform_ensemble(atoms: usize, grid: TimeGrid) -> Result<PathEnsemble, SimError> {
    grid.validate()?;
    if atoms < 2 {
        return Err(SimError::Param("terminal uniform law needs at least 2 atoms".into()));
    }
    let n = grid.steps;
    let mut data = vec![0.0; atoms * (n + 1)];
    for i in 0..atoms {
        data[i * (n + 1) + n] = i as f64 / (atoms - 1) as f64;
    }
    PathEnsemble::new(grid, 1, data, vec![0; atoms], ProcessModel::TerminalUniform { atoms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let t = g.times();
        assert_eq!(t[0], 0.0);
        assert_eq!(t[3], 1.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(-1.0, 2).is_err());
    }

    #[test]
    fn ensemble_rejects_bad_shapes() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let m = ProcessModel::Constant { value: vec![0.0] };
        assert!(PathEnsemble::new(g, 1, vec![0.0; 5], vec![0], m.clone()).is_err());
        assert!(PathEnsemble::new(g, 1, vec![0.0, f64::NAN, 0.0], vec![0], m.clone()).is_err());
        assert!(PathEnsemble::new(g, 1, vec![0.0; 6], vec![0, 1], m).is_ok());
    }

    #[test]
    fn terminal_uniform_layout() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let e = terminal_uniform_ensemble(101, g).unwrap();
        assert_eq!(e.n_paths, 101);
        assert_eq!(e.value(50, 4)[0], 0.5);
        assert!((0..4).all(|k| e.marginal(k, 0).iter().all(|v| *v == 0.0)));
    }
}
