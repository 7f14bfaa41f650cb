use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{martingale_residual, MartingaleOverlay, MeasureChange, StoppingSchedule};
use crate::numeric::{dist, KahanSum};
use crate::scenario_tree::ScenarioTree;
use crate::tilting::{ConvexG, TiltMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StageAudit {
    pub stage: usize,
    pub nodes: usize,
    pub eta: f64,
    pub identity: usize,
    pub two_stage: usize,
    pub exact_lp: usize,
    pub cap_hits: usize,
    /// Largest `E[Z w(ΔM) | v] / η_v` over the stage.
    pub max_w_ratio: f64,
    pub max_normalization_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ApproximationReport {
    pub eps: f64,
    pub g: ConvexG,
    pub noise: bool,
    /// `"identity"` when `S` was already a martingale, else `"tilted"`.
    pub method: String,
    /// `E_Q g(sup_t |S_t − S̃_t|)`
    pub achieved: f64,
    pub bound: f64,
    pub bound_ok: bool,
    /// `Σ_n E_Q w(ΔM_n)`, absent for identity runs.
    pub budget: Option<f64>,
    pub budget_per_stage: Vec<f64>,
    pub budget_ok: bool,
    pub stages: Vec<StageAudit>,
    pub max_deviation: f64,
    /// Whether every path stays within `2ε`, reported when every one-step
    /// move of the schedule coordinate is at most `ε`.
    pub pathwise_2eps: Option<bool>,
    pub total_q: f64,
    pub min_q: f64,
    pub martingale_residual: f64,
    /// `|S̃_0 − X_0|`
    pub root_pin: f64,
}

/// Upper bound on `E_Q g(sup|S − S̃|)`.
pub fn theoretical_bound(g: &ConvexG, eps: f64, noise: bool) -> f64 {
    if noise {
        (g.eval(4.0 * eps) + 2.0 * eps.sqrt()) / 2.0 + g.eval(2.0 * eps) / 2.0
    } else {
        g.eval(2.0 * eps) + 2.0 * eps.sqrt()
    }
}

/// Sup deviation `max_{u ≤ v} |S_u − S̃_u|` along the path to each node.
pub fn path_deviation(tree: &ScenarioTree, overlay: &MartingaleOverlay) -> Vec<f64> {
    let mut dev = vec![0.0f64; tree.len()];
    for node in &tree.nodes {
        let own = dist(&node.value, &overlay.values[node.id]);
        dev[node.id] = match node.parent {
            Some(p) => dev[p].max(own),
            None => own,
        };
    }
    dev
}

fn stage_budget(tree: &ScenarioTree, schedule: &StoppingSchedule, measure: &MeasureChange, q_node: &[f64]) -> Vec<f64> {
    let values = tree.coord_table(schedule.coord);
    let mut sums = vec![KahanSum::new(); schedule.n_stages().saturating_sub(1)];
    for u in 0..tree.len() {
        if let (Some(s), Some(p)) = (schedule.stage_of[u], schedule.prev_stop[u]) {
            if s > 0 {
                let inc: Vec<f64> = values[u].iter().zip(&values[p]).map(|(a, b)| a - b).collect();
                sums[s - 1].add(q_node[u] * measure.w.eval(&inc));
            }
        }
    }
    sums.iter().map(|s| s.value()).collect()
}

pub fn verify_bound(
    tree: &ScenarioTree,
    schedule: Option<&StoppingSchedule>,
    measure: &MeasureChange,
    overlay: &MartingaleOverlay,
    g: &ConvexG,
    noise: bool,
) -> ApproximationReport {
    let eps = measure.eps;
    let dev = path_deviation(tree, overlay);
    let achieved = measure
        .leaves
        .iter()
        .zip(&measure.q_leaf)
        .map(|(l, q)| q * g.eval(dev[*l]))
        .collect::<KahanSum>()
        .value();
    let max_deviation = measure.leaves.iter().map(|l| dev[*l]).fold(0.0, f64::max);
    let bound = theoretical_bound(g, eps, noise);
    let identity = measure.is_identity();
    let (budget, budget_per_stage, pathwise_2eps) = match schedule {
        Some(s) if !identity => {
            let per = stage_budget(tree, s, measure, &overlay.q_node);
            let total = per.iter().copied().collect::<KahanSum>().value();
            let values = tree.coord_table(s.coord);
            let small_steps = tree
                .nodes
                .iter()
                .all(|n| n.parent.is_none_or(|p| dist(&values[n.id], &values[p]) <= eps));
            (Some(total), per, small_steps.then_some(max_deviation < 2.0 * eps))
        }
        _ => (None, Vec::new(), None),
    };
    let stages = measure
        .tilts
        .iter()
        .enumerate()
        .map(|(i, ts)| StageAudit {
            stage: i + 1,
            nodes: ts.len(),
            eta: ts.first().map(|t| t.eta).unwrap_or(0.0),
            identity: ts.iter().filter(|t| t.method == TiltMethod::Identity).count(),
            two_stage: ts.iter().filter(|t| t.method == TiltMethod::TwoStage).count(),
            exact_lp: ts.iter().filter(|t| t.method == TiltMethod::ExactLp).count(),
            cap_hits: ts.iter().filter(|t| t.cap_hit).count(),
            max_w_ratio: ts.iter().map(|t| t.achieved.w_moment / t.eta).fold(0.0, f64::max),
            max_normalization_error: ts.iter().map(|t| t.normalization_error().abs()).fold(0.0, f64::max),
        })
        .collect();
    let root = tree.coord(0, overlay.coord);
    ApproximationReport {
        eps,
        g: *g,
        noise,
        method: if identity { "identity" } else { "tilted" }.to_string(),
        achieved,
        bound,
        bound_ok: achieved < bound,
        budget_ok: budget.is_none_or(|b| b < eps),
        budget,
        budget_per_stage,
        stages,
        max_deviation,
        pathwise_2eps,
        total_q: measure.total_q(),
        min_q: measure.min_q(),
        martingale_residual: martingale_residual(tree, overlay),
        root_pin: dist(&overlay.values[0], &root),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LpMomentReport {
    pub p: f64,
    /// `E_Q sup_t |S_t − S̃_t|^p`
    pub moment: f64,
    /// `Σ_n (E_Q |ΔM_n|^p)^{1/p}`
    pub stage_sum: f64,
}

pub fn lp_moment_report(
    tree: &ScenarioTree,
    schedule: &StoppingSchedule,
    measure: &MeasureChange,
    overlay: &MartingaleOverlay,
    p: f64,
) -> LpMomentReport {
    let dev = path_deviation(tree, overlay);
    let moment = measure
        .leaves
        .iter()
        .zip(&measure.q_leaf)
        .map(|(l, q)| q * dev[*l].powf(p))
        .collect::<KahanSum>()
        .value();
    let values = tree.coord_table(schedule.coord);
    let mut sums = vec![KahanSum::new(); schedule.n_stages().saturating_sub(1)];
    for u in 0..tree.len() {
        if let (Some(s), Some(prev)) = (schedule.stage_of[u], schedule.prev_stop[u]) {
            if s > 0 {
                sums[s - 1].add(overlay.q_node[u] * dist(&values[u], &values[prev]).powf(p));
            }
        }
    }
    let stage_sum = sums.iter().map(|s| s.value().powf(1.0 / p)).sum();
    LpMomentReport { p, moment, stage_sum }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_for_linear_g() {
        let g = ConvexG::Power { p: 1.0 };
        assert!((theoretical_bound(&g, 0.25, false) - 1.5).abs() < 1e-15);
        assert!((theoretical_bound(&g, 0.25, true) - 1.25).abs() < 1e-15);
        let eps = 1.0 / 64.0;
        assert!((theoretical_bound(&g, eps, true) - (3.0 * eps + eps.sqrt())).abs() < 1e-15);
    }
}
