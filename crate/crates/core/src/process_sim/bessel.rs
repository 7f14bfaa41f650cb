use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{simulate_with, PathEnsemble, ProcessModel, SimError, TimeGrid};
use crate::numeric::{derive_seed, normal_cdf};

/// Closed form `E[1/R_t] = 2Φ(1/√t) − 1` for the 3-d Bessel process started at 1.
pub fn bessel_inverse_mean(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        2.0 * normal_cdf(1.0 / t.sqrt()) - 1.0
    }
}

/// Continuous nonincreasing `m: [0,T] → (0,1]` with `m(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeChange {
    Constant,
    Exponential { rate: f64 },
    Linear { slope: f64 },
    /// `m = r`, which makes the time change the identity.
    BesselMean,
    /// Piecewise linear through `(times[i], values[i])`, flat after the last knot.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl TimeChange {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeChange::Constant => 1.0,
            TimeChange::Exponential { rate } => (-rate * t).exp(),
            TimeChange::Linear { slope } => 1.0 - slope * t,
            TimeChange::BesselMean => bessel_inverse_mean(t),
            TimeChange::Table { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                for i in 1..times.len() {
                    if t <= times[i] {
                        let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
                        return values[i - 1] + w * (values[i] - values[i - 1]);
                    }
                }
                *values.last().unwrap()
            }
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<(), SimError> {
        match self {
            TimeChange::Exponential { rate } if !(rate.is_finite() && *rate >= 0.0) => {
                return Err(SimError::Param(format!("exponential rate must be >= 0, got {rate}")));
            }
            TimeChange::Linear { slope } if !(slope.is_finite() && *slope >= 0.0) => {
                return Err(SimError::Param(format!("linear slope must be >= 0, got {slope}")));
            }
            TimeChange::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(SimError::Param("time change table needs matching non-empty knots".into()));
                }
                if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(SimError::Param("time change knots must start at 0 and increase".into()));
                }
            }
            _ => {}
        }
        let mut prev = self.eval(0.0);
        if (prev - 1.0).abs() > 1e-12 {
            return Err(SimError::Param(format!("time change must satisfy m(0) = 1, got {prev}")));
        }
        for t in grid.times() {
            let v = self.eval(t);
            if !(v > 0.0 && v <= 1.0) {
                return Err(SimError::Param(format!("m({t}) = {v} outside (0, 1]")));
            }
            if v > prev + 1e-15 {
                return Err(SimError::Param(format!("time change increases at t = {t}")));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Monte Carlo tabulation settings for `r(t) = E[1/R_t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BesselTable {
    #[serde(default = "default_table_paths")]
    pub paths: usize,
    #[serde(default = "default_table_points")]
    pub points: usize,
    #[serde(default = "default_table_horizon")]
    pub horizon: f64,
}

fn default_table_paths() -> usize {
    100_000
}
fn default_table_points() -> usize {
    256
}
fn default_table_horizon() -> f64 {
    16.0
}

impl Default for BesselTable {
    fn default() -> Self {
        Self {
            paths: default_table_paths(),
            points: default_table_points(),
            horizon: default_table_horizon(),
        }
    }
}

/// Tabulated, monotonised `r̂` on `u_j = j·horizon/points`.
#[derive(Debug, Clone)]
pub(crate) struct InverseMeanTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

const TABLE_BLOCK: usize = 1024;

impl InverseMeanTable {
    pub fn tabulate(spec: &BesselTable, seed: u64) -> Result<Self, SimError> {
        if spec.paths == 0 || spec.points == 0 || !(spec.horizon > 0.0) {
            return Err(SimError::Param("Bessel table needs positive paths, points and horizon".into()));
        }
        let k = spec.points;
        let du = spec.horizon / k as f64;
        let sq = du.sqrt();
        let n_blocks = spec.paths.div_ceil(TABLE_BLOCK);
        let table_seed = derive_seed(seed, 0xB355E1);
        // Blocks are summed in index order so the table does not depend on thread count.
        let partials: Vec<Vec<f64>> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut sums = vec![0.0; k + 1];
                let lo = b * TABLE_BLOCK;
                let hi = ((b + 1) * TABLE_BLOCK).min(spec.paths);
                for m in lo..hi {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(table_seed, m as u64));
                    let mut x = [1.0f64, 0.0, 0.0];
                    sums[0] += 1.0;
                    for s in sums.iter_mut().skip(1) {
                        for c in x.iter_mut() {
                            *c += sq * rng.sample::<f64, _>(StandardNormal);
                        }
                        *s += 1.0 / crate::numeric::norm(&x);
                    }
                }
                sums
            })
            .collect();
        let mut values = vec![0.0; k + 1];
        for p in &partials {
            for (v, s) in values.iter_mut().zip(p) {
                *v += s;
            }
        }
        for v in values.iter_mut() {
            *v /= spec.paths as f64;
        }
        values[0] = 1.0;
        for j in 1..=k {
            values[j] = values[j].min(values[j - 1]);
        }
        let times = (0..=k).map(|j| j as f64 * du).collect();
        Ok(Self { times, values })
    }

    /// `r̂^{-1}(m)` by linear interpolation.
    pub fn inverse(&self, m: f64) -> Result<f64, SimError> {
        if m >= 1.0 {
            return Ok(0.0);
        }
        let min = *self.values.last().unwrap();
        if m < min {
            return Err(SimError::TimeChangeRange { value: m, min });
        }
        let j = self.values.iter().position(|v| *v <= m).unwrap();
        let (r0, r1) = (self.values[j - 1], self.values[j]);
        let (u0, u1) = (self.times[j - 1], self.times[j]);
        if r0 == r1 {
            return Ok(u0);
        }
        Ok(u0 + (r0 - m) / (r0 - r1) * (u1 - u0))
    }
}

/// `M_t = 1/R_{r^{-1}(m(t))}` for a 3-d Bessel process `R` started at 1.
///
/// `R` is sampled exactly at the time-changed grid (Gaussian increments of a
/// 3-d Brownian motion from `(1,0,0)`); only `r` is estimated by Monte Carlo.
pub fn simulate_strict_local_martingale(
    time_change: &TimeChange,
    table: &BesselTable,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, SimError> {
    grid.validate()?;
    time_change.validate(&grid)?;
    let tab = InverseMeanTable::tabulate(table, seed)?;
    let clock: Vec<f64> = grid
        .times()
        .iter()
        .map(|t| tab.inverse(time_change.eval(*t)))
        .collect::<Result<_, _>>()?;
    let model = ProcessModel::StrictLocalMartingale { time_change: time_change.clone(), table: *table };
    simulate_with(grid, 1, n_paths, seed, model, |rng, path| {
        let mut x = [1.0f64, 0.0, 0.0];
        path[0] = 1.0;
        for i in 1..clock.len() {
            let dv = (clock[i] - clock[i - 1]).max(0.0).sqrt();
            if dv > 0.0 {
                for c in x.iter_mut() {
                    *c += dv * rng.sample::<f64, _>(StandardNormal);
                }
            }
            path[i] = 1.0 / crate::numeric::norm(&x);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> BesselTable {
        BesselTable { paths: 20_000, points: 128, horizon: 8.0 }
    }

    #[test]
    fn table_tracks_closed_form() {
        let tab = InverseMeanTable::tabulate(&small_table(), 5).unwrap();
        for (t, v) in tab.times.iter().zip(&tab.values).step_by(16) {
            assert!((v - bessel_inverse_mean(*t)).abs() < 0.02, "t={t} r̂={v}");
        }
        assert!(tab.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn constant_time_change_freezes_at_one() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let e = simulate_strict_local_martingale(&TimeChange::Constant, &small_table(), g, 20, 1).unwrap();
        assert!(e.data.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn positive_values() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let tc = TimeChange::Exponential { rate: 0.5 };
        let e = simulate_strict_local_martingale(&tc, &small_table(), g, 500, 2).unwrap();
        assert!(e.data.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn identity_time_change_reproduces_mean() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let e = simulate_strict_local_martingale(&TimeChange::BesselMean, &small_table(), g, 20_000, 7).unwrap();
        for k in 1..=4 {
            let xs = e.marginal(k, 0);
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let target = TimeChange::BesselMean.eval(g.time(k));
            assert!((mean - target).abs() < 3.0 * sd / n.sqrt() + 0.01, "k={k} {mean} vs {target}");
        }
    }

    #[test]
    fn out_of_range_time_change_names_range() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let tc = TimeChange::Linear { slope: 0.99 };
        let tab = BesselTable { paths: 2_000, points: 16, horizon: 1.0 };
        match simulate_strict_local_martingale(&tc, &tab, g, 10, 1) {
            Err(SimError::TimeChangeRange { value, min }) => {
                assert!(value < min);
                assert!(min > 0.3);
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_increasing_time_change() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let tc = TimeChange::Table { times: vec![0.0, 0.5, 1.0], values: vec![1.0, 0.5, 0.8] };
        assert!(tc.validate(&g).is_err());
    }
}
