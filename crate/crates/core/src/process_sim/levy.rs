use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{simulate_with, PathEnsemble, ProcessModel, SimError, TimeGrid};

/// One atom of a finite jump measure: jumps of `size` arriving at `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct JumpAtom {
    pub size: f64,
    pub rate: f64,
}

/// Lévy triplet with a compound-Poisson jump measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LevyParams {
    pub drift: f64,
    pub sigma: f64,
    #[serde(default)]
    pub jumps: Vec<JumpAtom>,
}

impl LevyParams {
    pub fn new(drift: f64, sigma: f64, jumps: Vec<JumpAtom>) -> Result<Self, SimError> {
        let p = Self { drift, sigma, jumps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.drift.is_finite() {
            return Err(SimError::Param("drift must be finite".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(SimError::Param(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        for a in &self.jumps {
            if !(a.rate.is_finite() && a.rate > 0.0) {
                return Err(SimError::Param(format!("jump rate must be positive, got {}", a.rate)));
            }
            if !a.size.is_finite() || a.size == 0.0 {
                return Err(SimError::Param(format!("jump size must be finite and nonzero, got {}", a.size)));
            }
        }
        Ok(())
    }

    /// `E[L_t]/t`: small jumps are compensated, large ones are not.
    pub fn mean_rate(&self) -> f64 {
        self.drift
            + self
                .jumps
                .iter()
                .filter(|a| a.size.abs() >= 1.0)
                .map(|a| a.size * a.rate)
                .sum::<f64>()
    }

    /// `∫_{-1}^{1} |x| ν(dx)` for the atom list.
    pub fn small_jump_integral(&self) -> f64 {
        self.jumps
            .iter()
            .filter(|a| a.size.abs() < 1.0)
            .map(|a| a.size.abs() * a.rate)
            .sum()
    }
}

/// Euler scheme for `L_t = ct + σB_t + ∫_{|θ|<1} θ Ñ(t,dθ) + ∫_{|θ|≥1} θ N(t,dθ)`.
pub fn simulate_levy(
    params: &LevyParams,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, SimError> {
    params.validate()?;
    grid.validate()?;
    let dt = grid.dt();
    let sq = dt.sqrt();
    let poissons: Vec<(f64, f64, Poisson<f64>)> = params
        .jumps
        .iter()
        .map(|a| {
            let comp = if a.size.abs() < 1.0 { a.size * a.rate * dt } else { 0.0 };
            Poisson::new(a.rate * dt)
                .map(|p| (a.size, comp, p))
                .map_err(|e| SimError::Param(format!("poisson rate: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let c = params.drift;
    let sigma = params.sigma;
    simulate_with(
        grid,
        1,
        n_paths,
        seed,
        ProcessModel::Levy { params: params.clone() },
        |rng, path| {
            path[0] = 0.0;
            for k in 0..grid.steps {
                let mut inc = c * dt;
                if sigma > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    inc += sigma * sq * z;
                }
                for (size, comp, pois) in &poissons {
                    let count = pois.sample(rng);
                    inc += size * count - comp;
                }
                path[k + 1] = path[k] + inc;
            }
        },
    )
}
