//! Finite filtered probability spaces built from path ensembles.
//!
//! Nodes are stored in breadth-first order, so `nodes[i].id == i`, the root is
//! node 0 and every parent precedes its children.

mod build;
pub mod io;
mod law;
mod product;
mod validate;

pub use build::{build_tree, build_tree_with, BuildOptions, Reduction, TreeBuild};
pub use law::{conditional_increment_law, StopLaw};
pub use product::{product_tree, NoiseSpec, DEFAULT_NODE_CAP};
pub use validate::{validate_tree, ValidationReport};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::KahanSum;
use crate::process_sim::TimeGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("invalid branching: {0}")]
    Branching(String),
    #[error("product tree would have {nodes} nodes, above the cap of {cap}; use smaller branching, fewer noise atoms or a shorter grid")]
    Overflow { nodes: usize, cap: usize },
    #[error("invalid stopping set from node {from}: {reason}")]
    StopSet { from: usize, reason: String },
    #[error("invalid noise spec: {0}")]
    Noise(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(String),
}

/// Which process a construction runs on: the base values `S`, or `Y = S + W`
/// on a noise product tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    S,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Edge {
    pub child: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Node {
    pub id: usize,
    pub k: usize,
    pub value: Vec<f64>,
    /// Bounded noise `W` at this node, present on product trees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<f64>>,
    pub parent: Option<usize>,
    pub children: Vec<Edge>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScenarioTree {
    pub grid: TimeGrid,
    pub dim: usize,
    pub nodes: Vec<Node>,
}

/// One row per leaf: the root-to-leaf node sequence and its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PathRow {
    pub leaf: usize,
    pub nodes: Vec<usize>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PathTable {
    pub rows: Vec<PathRow>,
}

impl PathTable {
    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.prob).collect::<KahanSum>().value()
    }
}

impl ScenarioTree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn has_noise(&self) -> bool {
        self.nodes.iter().any(|n| n.noise.is_some())
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect()
    }

    /// Value of `S` or `Y = S + W` at a node.
    pub fn coord(&self, id: usize, c: Coordinate) -> Vec<f64> {
        let n = &self.nodes[id];
        match (c, &n.noise) {
            (Coordinate::Y, Some(w)) => n.value.iter().zip(w).map(|(s, w)| s + w).collect(),
            _ => n.value.clone(),
        }
    }

    /// Values of a coordinate at every node, indexed by node id.
    pub fn coord_table(&self, c: Coordinate) -> Vec<Vec<f64>> {
        (0..self.nodes.len()).map(|i| self.coord(i, c)).collect()
    }

    /// Node ids from the root down to `id`.
    pub fn ancestry(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Probability of the edge into `id` (1 at the root).
    pub fn edge_prob(&self, id: usize) -> f64 {
        match self.nodes[id].parent {
            None => 1.0,
            Some(p) => self.nodes[p]
                .children
                .iter()
                .find(|e| e.child == id)
                .map(|e| e.prob)
                .unwrap_or(0.0),
        }
    }

    /// Unconditional `P(node)` for every node, computed top-down.
    pub fn node_probs(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.nodes.len()];
        if p.is_empty() {
            return p;
        }
        p[0] = 1.0;
        for n in &self.nodes {
            for e in &n.children {
                p[e.child] = p[n.id] * e.prob;
            }
        }
        p
    }

    pub fn path_table(&self) -> PathTable {
        let probs = self.node_probs();
        let rows = self
            .leaves()
            .into_iter()
            .map(|leaf| PathRow { leaf, nodes: self.ancestry(leaf), prob: probs[leaf] })
            .collect();
        PathTable { rows }
    }

    /// Node ids at each time index.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.grid.steps + 1];
        for n in &self.nodes {
            if n.k < out.len() {
                out[n.k].push(n.id);
            }
        }
        out
    }

    /// Whether `anc` lies on the path from the root to `id` (inclusive).
    pub fn is_ancestor(&self, anc: usize, id: usize) -> bool {
        let target_k = self.nodes[anc].k;
        let mut cur = id;
        loop {
            let n = &self.nodes[cur];
            if cur == anc {
                return true;
            }
            if n.k <= target_k {
                return false;
            }
            match n.parent {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Leaves below `id` (including `id` itself if it is a leaf).
    pub fn leaves_below(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(v) = stack.pop() {
            let n = &self.nodes[v];
            if n.is_leaf() {
                out.push(v);
            } else {
                for e in n.children.iter().rev() {
                    stack.push(e.child);
                }
            }
        }
        out
    }

    /// A tree from explicit `(parent, prob, value)` rows given in BFS order;
    /// row 0 is the root and its parent/prob are ignored. Intended for
    /// hand-built fixtures.
    pub fn from_rows(grid: TimeGrid, dim: usize, rows: &[(Option<usize>, f64, Vec<f64>)]) -> Result<Self, TreeError> {
        if rows.is_empty() {
            return Err(TreeError::Malformed("no rows".into()));
        }
        let mut nodes: Vec<Node> = Vec::with_capacity(rows.len());
        for (id, (parent, prob, value)) in rows.iter().enumerate() {
            if value.len() != dim {
                return Err(TreeError::Malformed(format!("node {id} has dimension {}", value.len())));
            }
            let k = match (id, parent) {
                (0, _) => 0,
                (_, Some(p)) if *p < id => nodes[*p].k + 1,
                _ => return Err(TreeError::Malformed(format!("node {id} has no earlier parent"))),
            };
            let parent = if id == 0 { None } else { *parent };
            if let Some(p) = parent {
                nodes[p].children.push(Edge { child: id, prob: *prob });
            }
            nodes.push(Node { id, k, value: value.clone(), noise: None, parent, children: vec![] });
        }
        Ok(Self { grid, dim, nodes })
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Chain tree holding `values[k]` at time `k`.
    pub fn chain(values: &[f64]) -> ScenarioTree {
        let grid = TimeGrid::new(1.0, values.len() - 1).unwrap();
        let rows: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, v)| (if i == 0 { None } else { Some(i - 1) }, 1.0, vec![*v]))
            .collect();
        ScenarioTree::from_rows(grid, 1, &rows).unwrap()
    }

    /// Full binary tree with `±step` moves and probabilities `(p, 1−p)`.
    pub fn binary(depth: usize, step: f64, p: f64) -> ScenarioTree {
        let grid = TimeGrid::new(1.0, depth).unwrap();
        let mut rows = vec![(None, 1.0, vec![0.0])];
        let mut frontier = vec![0usize];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &v in &frontier {
                let x = rows[v].2[0];
                rows.push((Some(v), 1.0 - p, vec![x - step]));
                next.push(rows.len() - 1);
                rows.push((Some(v), p, vec![x + step]));
                next.push(rows.len() - 1);
            }
            frontier = next;
        }
        ScenarioTree::from_rows(grid, 1, &rows).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;

    #[test]
    fn path_table_sums_to_one() {
        let t = binary(3, 1.0, 0.3);
        let pt = t.path_table();
        assert_eq!(pt.rows.len(), 8);
        assert!((pt.total() - 1.0).abs() < 1e-12);
        for r in &pt.rows {
            assert_eq!(r.nodes[0], 0);
            assert_eq!(*r.nodes.last().unwrap(), r.leaf);
        }
    }

    #[test]
    fn ancestry_and_leaves() {
        let t = binary(2, 1.0, 0.5);
        assert_eq!(t.leaves_below(1), vec![3, 4]);
        assert!(t.is_ancestor(1, 4));
        assert!(!t.is_ancestor(2, 4));
        assert_eq!(t.ancestry(6), vec![0, 2, 6]);
    }
}
