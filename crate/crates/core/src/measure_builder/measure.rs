use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{MeasureError, StoppingSchedule};
use crate::numeric::KahanSum;
use crate::scenario_tree::{conditional_increment_law, Coordinate, ScenarioTree};
use crate::tilting::{tilt_or_identity, Achieved, MomentFunction, TiltMethod, DEFAULT_F_MIN};

/// How the per-node tolerance `η_v` at stage `n` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EtaRule {
    /// `η_v = ε/2ⁿ`
    Geometric,
    /// `η_v = (ε/2ⁿ)/Π_{n−1}` where `Π_{n−1}` is the `Q`-mass of the
    /// non-terminated stage-(n−1) nodes.
    #[default]
    QWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MeasureOptions {
    pub f_min: f64,
    pub eta_rule: EtaRule,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self { f_min: DEFAULT_F_MIN, eta_rule: EtaRule::QWeighted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct NodeTilt {
    pub node: usize,
    pub stage: usize,
    pub eta: f64,
    pub stops: Vec<usize>,
    /// Conditional `P`-probability of each stop node.
    pub reach: Vec<f64>,
    /// Density factor `Z_n` at each stop node.
    pub z: Vec<f64>,
    pub method: TiltMethod,
    pub achieved: Achieved,
    pub cap_hit: bool,
}

impl NodeTilt {
    /// `E_P[Z_n | node] − 1`.
    pub fn normalization_error(&self) -> f64 {
        self.reach.iter().zip(&self.z).map(|(r, z)| r * z).collect::<KahanSum>().value() - 1.0
    }
}

/// `dQ/dP` on a tree as a product of per-stage factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MeasureChange {
    pub eps: f64,
    pub coord: Coordinate,
    pub w: MomentFunction,
    /// Tilts of stage `n ≥ 1` at index `n − 1`.
    pub tilts: Vec<Vec<NodeTilt>>,
    pub leaves: Vec<usize>,
    pub p_leaf: Vec<f64>,
    pub q_leaf: Vec<f64>,
    /// `ln dQ/dP` per leaf.
    pub log_density: Vec<f64>,
}

impl MeasureChange {
    /// `Q = P`.
    pub fn identity(tree: &ScenarioTree, eps: f64, coord: Coordinate, w: MomentFunction) -> Self {
        let leaves = tree.leaves();
        let probs = tree.node_probs();
        let p_leaf: Vec<f64> = leaves.iter().map(|l| probs[*l]).collect();
        Self {
            eps,
            coord,
            w,
            tilts: Vec::new(),
            log_density: vec![0.0; leaves.len()],
            q_leaf: p_leaf.clone(),
            p_leaf,
            leaves,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.tilts.iter().all(|s| s.is_empty())
    }

    pub fn total_q(&self) -> f64 {
        self.q_leaf.iter().copied().collect::<KahanSum>().value()
    }

    pub fn min_q(&self) -> f64 {
        self.q_leaf.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Q` indexed by node id, zero off the leaves.
    pub fn q_by_node(&self, n_nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_nodes];
        for (l, q) in self.leaves.iter().zip(&self.q_leaf) {
            out[*l] = *q;
        }
        out
    }

    /// Largest `|E_P[Z_n | v] − 1|` over all tilted nodes.
    pub fn max_normalization_error(&self) -> f64 {
        self.tilts.iter().flatten().map(|t| t.normalization_error().abs()).fold(0.0, f64::max)
    }
}

/// Tilts every non-terminated stage node with `η_v` from `opts.eta_rule`
/// and multiplies the factors along each path.
pub fn build_measure(
    tree: &ScenarioTree,
    schedule: &StoppingSchedule,
    w: &MomentFunction,
    opts: &MeasureOptions,
) -> Result<MeasureChange, MeasureError> {
    w.validate().map_err(MeasureError::Tilt)?;
    let n_nodes = tree.len();
    let probs = tree.node_probs();
    let mut qmass = vec![0.0; n_nodes];
    for v in &schedule.stages[0] {
        qmass[*v] = probs[*v];
    }
    let mut z_node = vec![1.0; n_nodes];
    let mut tilts: Vec<Vec<NodeTilt>> = Vec::with_capacity(schedule.transitions.len());
    for (i, trans) in schedule.transitions.iter().enumerate() {
        let stage = i + 1;
        let live: Vec<_> = trans.iter().filter(|t| !t.terminated()).collect();
        let base = schedule.eps / 2f64.powi(stage as i32);
        let eta = match opts.eta_rule {
            EtaRule::Geometric => base,
            EtaRule::QWeighted => {
                let pi: f64 = live.iter().map(|t| qmass[t.from]).collect::<KahanSum>().value();
                if pi > 0.0 {
                    base / pi
                } else {
                    base
                }
            }
        };
        let results: Vec<Result<NodeTilt, MeasureError>> = live
            .par_iter()
            .map(|t| {
                let law = conditional_increment_law(tree, t.from, &t.stops, schedule.coord)?;
                let tw = tilt_or_identity(&law.law, eta, w, opts.f_min)
                    .map_err(|e| MeasureError::at(stage, t.from, e))?;
                let z: Vec<f64> = law.atom_of.iter().map(|a| tw.f[*a]).collect();
                Ok(NodeTilt {
                    node: t.from,
                    stage,
                    eta,
                    stops: t.stops.clone(),
                    reach: law.reach,
                    z,
                    method: tw.method,
                    achieved: tw.achieved,
                    cap_hit: tw.cap_hit,
                })
            })
            .collect();
        let mut stage_tilts = Vec::with_capacity(results.len());
        for r in results {
            let t = r?;
            for ((u, r), z) in t.stops.iter().zip(&t.reach).zip(&t.z) {
                qmass[*u] = qmass[t.node] * r * z;
                z_node[*u] = *z;
            }
            stage_tilts.push(t);
        }
        tilts.push(stage_tilts);
    }

    let mut logq = vec![KahanSum::new(); n_nodes];
    let mut logp = vec![KahanSum::new(); n_nodes];
    for node in &tree.nodes {
        for e in &node.children {
            let mut c = logp[node.id];
            c.add(e.prob.ln());
            logp[e.child] = c;
            let mut c = logq[node.id];
            c.add(e.prob.ln());
            c.add(z_node[e.child].ln());
            logq[e.child] = c;
        }
    }
    let leaves = tree.leaves();
    let p_leaf: Vec<f64> = leaves.iter().map(|l| logp[*l].value().exp()).collect();
    let q_leaf: Vec<f64> = leaves.iter().map(|l| logq[*l].value().exp()).collect();
    let log_density = leaves.iter().map(|l| logq[*l].value() - logp[*l].value()).collect();
    Ok(MeasureChange { eps: schedule.eps, coord: schedule.coord, w: *w, tilts, leaves, p_leaf, q_leaf, log_density })
}
