use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::bound::theoretical_bound;
use super::closure::one_step_defect;
use super::{
    build_measure, close_martingale, stopping_schedule, verify_bound, ApproximationReport, MartingaleOverlay,
    MeasureChange, MeasureError, MeasureOptions, StoppingSchedule,
};
use crate::scenario_tree::{product_tree, Coordinate, NoiseSpec, ScenarioTree, DEFAULT_NODE_CAP};
use crate::tilting::{ConvexG, MomentFunction};

/// Relative one-step defect below which `S` counts as a `P`-martingale.
pub(crate) const MARTINGALE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxOptions {
    /// Explicit decreasing ε grid; derived from the tree when absent.
    pub eps_grid: Option<Vec<f64>>,
    pub rungs: usize,
    pub measure: MeasureOptions,
    pub allow_noise: bool,
    pub noise_atoms: usize,
    pub node_cap: usize,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        Self {
            eps_grid: None,
            rungs: 12,
            measure: MeasureOptions::default(),
            allow_noise: true,
            noise_atoms: 3,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Attempt {
    pub eps: f64,
    pub noise: bool,
    pub bound: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Approximation {
    /// Product tree used by a noise run.
    pub noise_tree: Option<ScenarioTree>,
    pub noise: Option<NoiseSpec>,
    pub schedule: Option<StoppingSchedule>,
    pub measure: MeasureChange,
    pub overlay: MartingaleOverlay,
    pub report: ApproximationReport,
    pub attempts: Vec<Attempt>,
}

impl Approximation {
    /// The tree the measure lives on.
    pub fn tree<'a>(&'a self, base: &'a ScenarioTree) -> &'a ScenarioTree {
        self.noise_tree.as_ref().unwrap_or(base)
    }
}

/// `ε_i = ε_0 / 2^i` with `ε_0` a quarter of the largest path oscillation of `S`.
pub fn eps_grid(tree: &ScenarioTree, rungs: usize) -> Vec<f64> {
    let d = tree.dim;
    let mut lo: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    let mut hi: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    let mut osc = 0.0f64;
    for node in &tree.nodes {
        let (l, h) = match node.parent {
            None => (node.value.clone(), node.value.clone()),
            Some(p) => (
                (0..d).map(|j| lo[p][j].min(node.value[j])).collect(),
                (0..d).map(|j| hi[p][j].max(node.value[j])).collect(),
            ),
        };
        if node.is_leaf() {
            osc = (0..d).map(|j| h[j] - l[j]).fold(osc, f64::max);
        }
        lo[node.id] = l;
        hi[node.id] = h;
    }
    let e0 = osc / 4.0;
    (0..rungs).map(|i| e0 / 2f64.powi(i as i32)).collect()
}

fn is_p_martingale(tree: &ScenarioTree) -> bool {
    let values = tree.coord_table(Coordinate::S);
    tree.nodes
        .iter()
        .filter(|n| !n.is_leaf())
        .all(|n| one_step_defect(tree, &values, n.id) <= MARTINGALE_TOL)
}

struct Built {
    schedule: StoppingSchedule,
    measure: MeasureChange,
    overlay: MartingaleOverlay,
    report: ApproximationReport,
}

fn run(tree: &ScenarioTree, eps: f64, coord: Coordinate, g: &ConvexG, noise: bool, opts: &MeasureOptions) -> Result<Built, MeasureError> {
    let schedule = stopping_schedule(tree, eps, coord, &[0])?;
    let w = MomentFunction::for_g(g, noise);
    let measure = build_measure(tree, &schedule, &w, opts)?;
    let overlay = close_martingale(tree, &measure, coord);
    let report = verify_bound(tree, Some(&schedule), &measure, &overlay, g, noise);
    Ok(Built { schedule, measure, overlay, report })
}

/// Finds `Q ~ P` and a `Q`-martingale `S̃` with `E_Q g(sup|S − S̃|)` below `chi`.
///
/// Returns `Q = P` straight away when `S` is already a `P`-martingale.
/// Otherwise tries each grid ε whose bound is below `chi`, largest first, on
/// the bare tree and, after a geometry violation, on the tree tensored with
/// noise of amplitude `ε/4`.
pub fn approximate(tree: &ScenarioTree, g: &ConvexG, chi: f64, opts: &ApproxOptions) -> Result<Approximation, MeasureError> {
    g.validate().map_err(MeasureError::Tilt)?;
    if !(chi.is_finite() && chi > 0.0) {
        return Err(MeasureError::Param(format!("chi must be positive, got {chi}")));
    }
    let grid = opts.eps_grid.clone().unwrap_or_else(|| eps_grid(tree, opts.rungs));
    if grid.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(MeasureError::Param("eps grid must be finite and nonnegative".into()));
    }
    let eligible: Vec<f64> = grid.iter().copied().filter(|e| *e > 0.0 && theoretical_bound(g, *e, true) < chi).collect();

    if is_p_martingale(tree) {
        let eps = eligible.first().copied().unwrap_or(0.0);
        let w = MomentFunction::for_g(g, false);
        let measure = MeasureChange::identity(tree, eps, Coordinate::S, w);
        let overlay = close_martingale(tree, &measure, Coordinate::S);
        let mut report = verify_bound(tree, None, &measure, &overlay, g, false);
        report.bound_ok = report.achieved <= report.bound;
        return Ok(Approximation { noise_tree: None, noise: None, schedule: None, measure, overlay, report, attempts: vec![] });
    }

    if eligible.is_empty() {
        let best = grid
            .iter()
            .filter(|e| **e > 0.0)
            .map(|e| theoretical_bound(g, *e, true))
            .fold(f64::INFINITY, f64::min);
        return Err(MeasureError::ExhaustedGrid { chi, best_bound: best });
    }

    let mut attempts = Vec::new();
    let mut last_err: Option<MeasureError> = None;
    for eps in eligible {
        match run(tree, eps, Coordinate::S, g, false, &opts.measure) {
            Ok(b) => {
                attempts.push(Attempt { eps, noise: false, bound: b.report.bound, error: None });
                return Ok(Approximation {
                    noise_tree: None,
                    noise: None,
                    schedule: Some(b.schedule),
                    measure: b.measure,
                    overlay: b.overlay,
                    report: b.report,
                    attempts,
                });
            }
            Err(e) => {
                let geometry = e.is_geometry();
                attempts.push(Attempt { eps, noise: false, bound: theoretical_bound(g, eps, false), error: Some(e.to_string()) });
                last_err = Some(e);
                if !geometry || !opts.allow_noise {
                    continue;
                }
            }
        }
        let a = eps / 4.0;
        let spec = NoiseSpec::new(a, opts.noise_atoms, 1.0 / a)?;
        let noisy = match product_tree(tree, &spec, opts.node_cap) {
            Ok(t) => t,
            Err(e) => {
                attempts.push(Attempt { eps, noise: true, bound: theoretical_bound(g, eps, true), error: Some(e.to_string()) });
                last_err = Some(e.into());
                continue;
            }
        };
        match run(&noisy, eps, Coordinate::Y, g, true, &opts.measure) {
            Ok(b) => {
                attempts.push(Attempt { eps, noise: true, bound: b.report.bound, error: None });
                return Ok(Approximation {
                    noise_tree: Some(noisy),
                    noise: Some(spec),
                    schedule: Some(b.schedule),
                    measure: b.measure,
                    overlay: b.overlay,
                    report: b.report,
                    attempts,
                });
            }
            Err(e) => {
                attempts.push(Attempt { eps, noise: true, bound: theoretical_bound(g, eps, true), error: Some(e.to_string()) });
                last_err = Some(match e {
                    MeasureError::GeometryViolation { reason, .. } => MeasureError::PersistentGeometryViolation { eps, reason },
                    other => other,
                });
            }
        }
    }
    tracing::debug!(?attempts, "approximation failed on every eligible eps");
    Err(last_err.expect("at least one attempt"))
}
