use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::approximate::{eps_grid, MARTINGALE_TOL};
use super::closure::one_step_defect;
use super::{
    build_measure, close_martingale, stopping_schedule, verify_bound, ApproxOptions, ApproximationReport,
    MartingaleOverlay, MeasureChange, MeasureError, StoppingSchedule,
};
use crate::numeric::{norm, KahanSum};
use crate::scenario_tree::{Coordinate, ScenarioTree};
use crate::tilting::{ConvexG, MomentFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeOptions {
    /// Increasing levels `λ_k`.
    pub levels: Vec<f64>,
    pub approx: ApproxOptions,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self { levels: vec![1.0, 2.0, 4.0, 8.0], approx: ApproxOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LevelRow {
    pub lambda: f64,
    /// `P(σ_k ≤ T)`
    pub hit_mass: f64,
    pub eps: Option<f64>,
    pub tv: Option<f64>,
    pub achieved: Option<f64>,
    pub bound: Option<f64>,
    pub admissible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Localization {
    pub level_index: usize,
    pub lambda: f64,
    pub tv: f64,
    pub schedule: StoppingSchedule,
    pub measure: MeasureChange,
    pub overlay: MartingaleOverlay,
    pub report: ApproximationReport,
    pub table: Vec<LevelRow>,
}

/// `Σ_ℓ |Q(ℓ) − P(ℓ)|` over leaves.
pub fn total_variation(measure: &MeasureChange) -> f64 {
    measure.q_leaf.iter().zip(&measure.p_leaf).map(|(q, p)| (q - p).abs()).collect::<KahanSum>().value()
}

/// First node on each path with `|S| ≥ λ`, plus the leaves of paths that never get there.
fn hitting_antichain(tree: &ScenarioTree, lambda: f64) -> (Vec<usize>, Vec<bool>) {
    let mut before = vec![false; tree.len()];
    let mut start = Vec::new();
    for node in &tree.nodes {
        let parent_before = node.parent.is_none_or(|p| before[p]);
        if !parent_before {
            continue;
        }
        if norm(&node.value) >= lambda || node.is_leaf() {
            start.push(node.id);
        } else {
            before[node.id] = true;
        }
    }
    (start, before)
}

struct LevelRun {
    schedule: StoppingSchedule,
    measure: MeasureChange,
    overlay: MartingaleOverlay,
    report: ApproximationReport,
    tv: f64,
}

/// Tilts only after `σ_k = inf{t : |S_t| ≥ λ_k}` and keeps `Q = P` before,
/// for each level in turn. Returns the first level with total variation
/// below `chi` and the bound satisfied, with the table over all levels.
pub fn localize_and_build(
    tree: &ScenarioTree,
    g: &ConvexG,
    chi: f64,
    opts: &LocalizeOptions,
) -> Result<Localization, MeasureError> {
    g.validate().map_err(MeasureError::Tilt)?;
    if opts.levels.is_empty() || opts.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MeasureError::Param("levels must be nonempty and increasing".into()));
    }
    let grid: Vec<f64> = opts
        .approx
        .eps_grid
        .clone()
        .unwrap_or_else(|| eps_grid(tree, opts.approx.rungs))
        .into_iter()
        .filter(|e| *e > 0.0)
        .collect();
    if grid.is_empty() {
        return Err(MeasureError::Param("no positive eps; the tree has zero oscillation".into()));
    }
    let values = tree.coord_table(Coordinate::S);
    let probs = tree.node_probs();
    let w = MomentFunction::for_g(g, false);

    let mut table = Vec::with_capacity(opts.levels.len());
    let mut chosen: Option<(usize, LevelRun)> = None;
    for (k, &lambda) in opts.levels.iter().enumerate() {
        let (start, before) = hitting_antichain(tree, lambda);
        for node in tree.nodes.iter().filter(|n| before[n.id] && !n.is_leaf()) {
            let residual = one_step_defect(tree, &values, node.id);
            if residual > MARTINGALE_TOL {
                return Err(MeasureError::NotLocalMartingale { node: node.id, residual });
            }
        }
        let hit_mass = start
            .iter()
            .filter(|s| norm(&tree.node(**s).value) >= lambda)
            .map(|s| probs[*s])
            .collect::<KahanSum>()
            .value();
        let mut row = LevelRow { lambda, hit_mass, eps: None, tv: None, achieved: None, bound: None, admissible: false, error: None };
        let mut run: Option<LevelRun> = None;
        for &eps in &grid {
            let attempt = stopping_schedule(tree, eps, Coordinate::S, &start).and_then(|schedule| {
                let measure = build_measure(tree, &schedule, &w, &opts.approx.measure)?;
                let overlay = close_martingale(tree, &measure, Coordinate::S);
                let report = verify_bound(tree, Some(&schedule), &measure, &overlay, g, false);
                let tv = total_variation(&measure);
                Ok(LevelRun { schedule, measure, overlay, report, tv })
            });
            match attempt {
                Ok(r) => {
                    run = Some(r);
                    break;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
        }
        if let Some(r) = run {
            row.eps = Some(r.measure.eps);
            row.tv = Some(r.tv);
            row.achieved = Some(r.report.achieved);
            row.bound = Some(r.report.bound);
            row.error = None;
            row.admissible = r.tv < chi && r.report.bound_ok;
            if row.admissible && chosen.is_none() {
                chosen = Some((k, r));
            }
        }
        table.push(row);
    }
    match chosen {
        Some((k, r)) => Ok(Localization {
            level_index: k,
            lambda: opts.levels[k],
            tv: r.tv,
            schedule: r.schedule,
            measure: r.measure,
            overlay: r.overlay,
            report: r.report,
            table,
        }),
        None => Err(MeasureError::NoAdmissibleLevel { chi, table }),
    }
}
