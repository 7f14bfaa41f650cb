//! Dual certificate for no arbitrage under superlinear trading costs
//! `G(x) = H|x|^α`, built from `Z⁰ ≡ 1` and `Z = S̃`.

use std::io::Write;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure_builder::{approximate, ApproxOptions, MartingaleOverlay, MeasureChange, MeasureError};
use crate::numeric::{dist, norm, ols_slope, KahanSum};
use crate::scenario_tree::ScenarioTree;
use crate::tilting::ConvexG;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Na2Error {
    #[error("invalid cost: {0}")]
    Cost(String),
    #[error("beta = {beta} must lie in (1, alpha = {alpha})")]
    Beta { beta: f64, alpha: f64 },
    #[error("overlay does not match the tree: {0}")]
    Mismatch(String),
    #[error("measure: {0}")]
    Measure(#[from] MeasureError),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CostForm {
    #[default]
    Power,
}

/// `G(x) = H|x|^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(rename = "H")]
    pub h: f64,
    pub alpha: f64,
    #[serde(default)]
    pub form: CostForm,
}

impl CostSpec {
    pub fn new(h: f64, alpha: f64) -> Result<Self, Na2Error> {
        let c = Self { h, alpha, form: CostForm::Power };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), Na2Error> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Na2Error::Cost(format!("H must be positive, got {}", self.h)));
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Na2Error::Cost(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.h * norm(x).powf(self.alpha)
    }
}

/// `C = (α−1)·α^{−α/(α−1)}·H^{−1/(α−1)}`. For power costs `G*(y) = C|y|^{α/(α−1)}`
/// holds with equality.
pub fn conjugate_growth_constant(cost: &CostSpec) -> f64 {
    let a = cost.alpha;
    (a - 1.0) * a.powf(-a / (a - 1.0)) * cost.h.powf(-1.0 / (a - 1.0))
}

/// `G*(y) = sup_x (x·y − G(x))`.
pub fn conjugate(cost: &CostSpec, y: &[f64]) -> f64 {
    let a = cost.alpha;
    conjugate_growth_constant(cost) * norm(y).powf(a / (a - 1.0))
}

/// `G(x) ≥ H|x|^α` on a grid; always true for the power form.
pub fn check_superlinearity(cost: &CostSpec) -> bool {
    match cost.form {
        CostForm::Power => (0..=400).all(|i| {
            let x = i as f64 * 0.025;
            cost.eval(&[x]) >= cost.h * x.powf(cost.alpha)
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Na2Certificate {
    pub cost: CostSpec,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub chi: f64,
    /// `E_Q Σ_t G*(S̃_t − S_t) Δt`
    pub dual_gap: f64,
    /// `E_Q Σ_t (1 + |S_t|)^{βα/(α−β)} Δt`
    pub moment: f64,
    /// `E_Q |(1, S̃_T)|^γ`
    pub z_integrability: f64,
    /// `E_Q sup_t |S_t − S̃_t|^δ`
    pub deviation_moment: f64,
    /// `T·C·m^{α/((α−1)δ)}` with `m` the deviation moment.
    pub predicted_bound: f64,
    pub pass: bool,
    pub note: String,
}

const NOTE: &str = "Dual side only: Z0 = 1 and Z = S~, so the condition that Z vanishes where Z0 does is vacuous. \
A failed certificate at this (eps, beta) does not exhibit an arbitrage.";

pub fn exponents(alpha: f64, beta: f64) -> Result<(f64, f64), Na2Error> {
    if !(beta > 1.0 && beta < alpha) {
        return Err(Na2Error::Beta { beta, alpha });
    }
    let gamma = beta / (beta - 1.0);
    let delta = gamma.max(beta * alpha / (alpha - beta));
    Ok((gamma, delta))
}

/// Evaluates the certificate by exact summation over leaves, with the time
/// integral as a left-endpoint Riemann sum.
pub fn certify(
    tree: &ScenarioTree,
    measure: &MeasureChange,
    overlay: &MartingaleOverlay,
    cost: &CostSpec,
    beta: f64,
    chi: f64,
) -> Result<Na2Certificate, Na2Error> {
    cost.validate()?;
    let (gamma, delta) = exponents(cost.alpha, beta)?;
    if overlay.values.len() != tree.len() {
        return Err(Na2Error::Mismatch(format!("{} overlay values for {} nodes", overlay.values.len(), tree.len())));
    }
    if measure.leaves.iter().any(|l| *l >= tree.len() || !tree.node(*l).is_leaf()) {
        return Err(Na2Error::Mismatch("measure leaves are not leaves of the tree".into()));
    }
    let dt = tree.grid.dt();
    let n = tree.grid.steps;
    let mexp = beta * cost.alpha / (cost.alpha - beta);

    // Running sums from the root: Σ_{k<N} G*(S̃ − S)Δt, Σ_{k<N} (1+|S|)^m Δt, sup|S − S̃|.
    let len = tree.len();
    let mut gap = vec![KahanSum::new(); len];
    let mut mom = vec![KahanSum::new(); len];
    let mut sup = vec![0.0f64; len];
    for node in &tree.nodes {
        let diff: Vec<f64> = overlay.values[node.id].iter().zip(&node.value).map(|(a, b)| a - b).collect();
        let (mut g, mut m, s) = match node.parent {
            Some(p) => (gap[p], mom[p], sup[p]),
            None => (KahanSum::new(), KahanSum::new(), 0.0),
        };
        if node.k < n {
            g.add(conjugate(cost, &diff) * dt);
            m.add((1.0 + norm(&node.value)).powf(mexp) * dt);
        }
        gap[node.id] = g;
        mom[node.id] = m;
        sup[node.id] = s.max(dist(&overlay.values[node.id], &node.value));
    }
    let mut dual = KahanSum::new();
    let mut moment = KahanSum::new();
    let mut zint = KahanSum::new();
    let mut dev = KahanSum::new();
    for (l, q) in measure.leaves.iter().zip(&measure.q_leaf) {
        dual.add(q * gap[*l].value());
        moment.add(q * mom[*l].value());
        let z = &overlay.values[*l];
        zint.add(q * (1.0 + z.iter().map(|v| v * v).sum::<f64>()).sqrt().powf(gamma));
        dev.add(q * sup[*l].powf(delta));
    }
    let dual_gap = dual.value().max(0.0);
    let moment = moment.value();
    let z_integrability = zint.value();
    let deviation_moment = dev.value();
    let predicted_bound =
        tree.grid.horizon * conjugate_growth_constant(cost) * deviation_moment.powf(cost.alpha / ((cost.alpha - 1.0) * delta));
    let pass = dual_gap < chi && moment.is_finite() && z_integrability.is_finite();
    Ok(Na2Certificate {
        cost: *cost,
        beta,
        gamma,
        delta,
        chi,
        dual_gap,
        moment,
        z_integrability,
        deviation_moment,
        predicted_bound,
        pass,
        note: NOTE.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScalingRow {
    pub eps: f64,
    pub noise: Option<bool>,
    /// Deviation moment `E_Q sup|S − S̃|^δ`, the `χ` of the scaling law.
    pub chi: Option<f64>,
    pub dual_gap: Option<f64>,
    pub predicted_bound: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// `α/((α−1)δ)`
    pub expected_slope: f64,
    /// OLS slope of `ln gap` on `ln χ` over rows with a positive gap.
    pub fitted_slope: Option<f64>,
}

impl ScalingTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), Na2Error> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Na2Error::Io(e.to_string());
        w.write_record(["eps", "noise", "chi", "dual_gap", "predicted_bound", "error"]).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.eps),
                r.noise.map(|b| b.to_string()).unwrap_or_default(),
                opt(r.chi),
                opt(r.dual_gap),
                opt(r.predicted_bound),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Na2Error::Io(e.to_string()))
    }
}

/// Runs the approximation at each `ε` and certifies the result.
pub fn scaling_law(
    tree: &ScenarioTree,
    g: &ConvexG,
    cost: &CostSpec,
    beta: f64,
    eps_grid: &[f64],
    opts: &ApproxOptions,
) -> Result<ScalingTable, Na2Error> {
    cost.validate()?;
    let (_, delta) = exponents(cost.alpha, beta)?;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let o = ApproxOptions { eps_grid: Some(vec![eps]), ..opts.clone() };
        let row = match approximate(tree, g, f64::MAX, &o) {
            Ok(a) => {
                let t = a.tree(tree);
                let c = certify(t, &a.measure, &a.overlay, cost, beta, f64::INFINITY)?;
                ScalingRow {
                    eps,
                    noise: Some(a.report.noise),
                    chi: Some(c.deviation_moment),
                    dual_gap: Some(c.dual_gap),
                    predicted_bound: Some(c.predicted_bound),
                    error: None,
                }
            }
            Err(e) => ScalingRow { eps, noise: None, chi: None, dual_gap: None, predicted_bound: None, error: Some(e.to_string()) },
        };
        rows.push(row);
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| match (r.chi, r.dual_gap) {
            (Some(c), Some(g)) if c > 0.0 && g > 0.0 => Some((c.ln(), g.ln())),
            _ => None,
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let fitted_slope = if xs.len() >= 2 { ols_slope(&xs, &ys) } else { None };
    Ok(ScalingTable { rows, expected_slope: cost.alpha / ((cost.alpha - 1.0) * delta), fitted_slope })
}
