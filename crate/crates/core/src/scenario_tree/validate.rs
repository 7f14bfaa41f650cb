use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::ScenarioTree;
use crate::numeric::KahanSum;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant and lists what fails.
pub fn validate_tree(tree: &ScenarioTree) -> ValidationReport {
    let mut v = Vec::new();
    if tree.nodes.is_empty() {
        v.push("tree has no nodes".to_string());
        return ValidationReport { violations: v };
    }
    let roots = tree.nodes.iter().filter(|n| n.parent.is_none()).count();
    if roots != 1 {
        v.push(format!("expected exactly one root, found {roots}"));
    }
    if tree.nodes[0].parent.is_some() || tree.nodes[0].k != 0 {
        v.push("node 0 must be the root at k = 0".to_string());
    }
    for (i, n) in tree.nodes.iter().enumerate() {
        if n.id != i {
            v.push(format!("node at index {i} has id {}", n.id));
        }
        if n.value.len() != tree.dim {
            v.push(format!("node {i}: value has dimension {} ≠ {}", n.value.len(), tree.dim));
        }
        if n.value.iter().any(|x| !x.is_finite()) {
            v.push(format!("node {i}: non-finite value"));
        }
        if let Some(w) = &n.noise {
            if w.len() != tree.dim || w.iter().any(|x| !x.is_finite()) {
                v.push(format!("node {i}: malformed noise"));
            }
        }
        if let Some(p) = n.parent {
            if p >= tree.nodes.len() || !tree.nodes[p].children.iter().any(|e| e.child == i) {
                v.push(format!("node {i}: parent {p} does not list it as a child"));
            }
        }
        if n.is_leaf() {
            if n.k != tree.grid.steps {
                v.push(format!("node {i}: leaf at k = {} before the horizon", n.k));
            }
            continue;
        }
        for e in &n.children {
            if e.child >= tree.nodes.len() {
                v.push(format!("node {i}: child {} does not exist", e.child));
                continue;
            }
            let c = &tree.nodes[e.child];
            if c.parent != Some(i) {
                v.push(format!("node {i}: child {} has parent {:?}", e.child, c.parent));
            }
            if c.k != n.k + 1 {
                v.push(format!("node {i}: child {} at k = {} ≠ {}", e.child, c.k, n.k + 1));
            }
            if !(e.prob > 0.0) {
                v.push(format!("node {i}: child {} has prob {} ≤ 0", e.child, e.prob));
            }
        }
        let sum = n.children.iter().map(|e| e.prob).collect::<KahanSum>().value();
        if (sum - 1.0).abs() > PROB_TOL {
            v.push(format!("node {i}: probs sum {sum} ≠ 1"));
        }
    }
    if v.is_empty() {
        let total = tree.path_table().total();
        if (total - 1.0).abs() > PROB_TOL {
            v.push(format!("leaf probabilities sum {total} ≠ 1"));
        }
    }
    ValidationReport { violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_tree::fixtures::{binary, chain};

    #[test]
    fn chain_is_valid() {
        assert!(validate_tree(&chain(&[0.0, 1.0, 2.0])).ok());
        assert!(validate_tree(&binary(4, 1.0, 0.2)).ok());
    }

    #[test]
    fn bad_probabilities_reported() {
        let mut t = binary(1, 1.0, 0.5);
        t.nodes[0].children[0].prob = 0.6;
        t.nodes[0].children[1].prob = 0.5;
        let r = validate_tree(&t);
        assert!(r.violations.iter().any(|s| s.contains("probs sum 1.1 ≠ 1")), "{r:?}");
    }

    #[test]
    fn early_leaf_reported() {
        let mut t = chain(&[0.0, 1.0, 2.0]);
        t.nodes[1].children.clear();
        t.nodes.truncate(2);
        assert!(!validate_tree(&t).ok());
    }
}
