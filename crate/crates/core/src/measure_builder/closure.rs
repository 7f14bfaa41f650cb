use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::MeasureChange;
use crate::numeric::KahanSum;
use crate::scenario_tree::{Coordinate, ScenarioTree};

/// `S̃_v = E_Q[X_T | v]` at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MartingaleOverlay {
    pub coord: Coordinate,
    pub values: Vec<Vec<f64>>,
    /// `Q(v)` for every node.
    pub q_node: Vec<f64>,
}

/// `Q`-mass of every node, summed bottom-up from the leaves.
pub fn q_node_masses(tree: &ScenarioTree, measure: &MeasureChange) -> Vec<f64> {
    let mut q = measure.q_by_node(tree.len());
    for node in tree.nodes.iter().rev() {
        if !node.is_leaf() {
            q[node.id] = node.children.iter().map(|e| q[e.child]).collect::<KahanSum>().value();
        }
    }
    q
}

/// Backward induction from the terminal values of `coord`.
pub fn close_martingale(tree: &ScenarioTree, measure: &MeasureChange, coord: Coordinate) -> MartingaleOverlay {
    let q_node = q_node_masses(tree, measure);
    let dim = tree.dim;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    for node in tree.nodes.iter().rev() {
        if node.is_leaf() {
            values[node.id] = tree.coord(node.id, coord);
            continue;
        }
        let qv = q_node[node.id];
        values[node.id] = (0..dim)
            .map(|j| {
                node.children
                    .iter()
                    .map(|e| q_node[e.child] / qv * values[e.child][j])
                    .collect::<KahanSum>()
                    .value()
            })
            .collect();
    }
    MartingaleOverlay { coord, values, q_node }
}

/// Largest `|S̃_v − Σ_c Q(c|v) S̃_c|` over internal nodes.
pub fn martingale_residual(tree: &ScenarioTree, overlay: &MartingaleOverlay) -> f64 {
    let q = &overlay.q_node;
    let mut worst = 0.0f64;
    for node in tree.nodes.iter().filter(|n| !n.is_leaf()) {
        for j in 0..tree.dim {
            let e: f64 = node
                .children
                .iter()
                .map(|e| q[e.child] / q[node.id] * overlay.values[e.child][j])
                .collect::<KahanSum>()
                .value();
            worst = worst.max((overlay.values[node.id][j] - e).abs());
        }
    }
    worst
}

/// `|Σ_c P(c|v) X_c − X_v|` at an internal node, relative to the node's scale.
pub(crate) fn one_step_defect(tree: &ScenarioTree, values: &[Vec<f64>], v: usize) -> f64 {
    let node = tree.node(v);
    let mut scale = 1.0 + crate::numeric::norm(&values[v]);
    for e in &node.children {
        scale = scale.max(1.0 + crate::numeric::norm(&values[e.child]));
    }
    (0..tree.dim)
        .map(|j| {
            let m = node.children.iter().map(|e| e.prob * values[e.child][j]).collect::<KahanSum>().value();
            (m - values[v][j]).abs() / scale
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_tree::fixtures::binary;
    use crate::tilting::MomentFunction;

    #[test]
    fn identity_on_martingale_recovers_values() {
        let t = binary(4, 0.5, 0.5);
        let m = MeasureChange::identity(&t, 0.1, Coordinate::S, MomentFunction::Abs);
        let o = close_martingale(&t, &m, Coordinate::S);
        for n in &t.nodes {
            assert!((o.values[n.id][0] - n.value[0]).abs() < 1e-14);
        }
        assert!(martingale_residual(&t, &o) < 1e-14);
        assert!((o.q_node[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn drifted_tree_closes_under_p() {
        // Up-probability 0.7: S̃ at the root is the P-mean of S_T.
        let t = binary(3, 1.0, 0.7);
        let m = MeasureChange::identity(&t, 0.1, Coordinate::S, MomentFunction::Abs);
        let o = close_martingale(&t, &m, Coordinate::S);
        assert!((o.values[0][0] - 3.0 * 0.4).abs() < 1e-12);
        assert!(martingale_residual(&t, &o) < 1e-14);
    }
}
