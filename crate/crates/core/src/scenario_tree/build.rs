use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{Edge, Node, ScenarioTree, TreeError};
use crate::numeric::{derive_seed, KahanSum};
use crate::process_sim::PathEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BuildOptions {
    /// Seed for the first Lloyd center at every node.
    #[serde(default)]
    pub seed: u64,
    /// Shift children so that every node's expected increment is zero, which
    /// turns the tree into a P-martingale.
    #[serde(default)]
    pub center_increments: bool,
    /// A node with a single child passes its value on unchanged.
    #[serde(default)]
    pub hold_single: bool,
    #[serde(default = "default_iters")]
    pub max_iter: usize,
}

fn default_iters() -> usize {
    100
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { seed: 0, center_increments: false, hold_single: false, max_iter: default_iters() }
    }
}

/// A node where fewer clusters than requested were used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Reduction {
    pub node: usize,
    pub requested: usize,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeBuild {
    pub tree: ScenarioTree,
    /// Leaf id for every ensemble path.
    pub leaf_of_path: Vec<usize>,
    pub reductions: Vec<Reduction>,
}

impl TreeBuild {
    pub fn reduced(&self) -> bool {
        !self.reductions.is_empty()
    }
}

pub fn build_tree(ens: &PathEnsemble, branching: &[usize]) -> Result<TreeBuild, TreeError> {
    build_tree_with(ens, branching, &BuildOptions::default())
}

/// Recursive Lloyd clustering of one-step moves, stage by stage.
///
/// At a node with value `v` holding paths `P`, the points `x_{m,k+1} − v`,
/// `m ∈ P`, are split into `branching[k]` clusters. A child's value is its
/// cluster's mean of `x_{k+1}` and its probability is the cluster share.
pub fn build_tree_with(
    ens: &PathEnsemble,
    branching: &[usize],
    opts: &BuildOptions,
) -> Result<TreeBuild, TreeError> {
    let n_steps = ens.grid.steps;
    if branching.len() != n_steps {
        return Err(TreeError::Branching(format!(
            "{} branching entries for {n_steps} steps",
            branching.len()
        )));
    }
    if let Some(k) = branching.iter().position(|b| *b == 0) {
        return Err(TreeError::Branching(format!("branching[{k}] is 0")));
    }
    let d = ens.dim;
    let all: Vec<usize> = (0..ens.n_paths).collect();
    let root_value = mean_at(ens, &all, 0);
    let mut nodes = vec![Node { id: 0, k: 0, value: root_value, noise: None, parent: None, children: vec![] }];
    let mut frontier: Vec<(usize, Vec<usize>)> = vec![(0, all)];
    let mut reductions = Vec::new();

    for (k, &b) in branching.iter().enumerate() {
        let parts: Vec<(Vec<Vec<usize>>, Option<Reduction>)> = frontier
            .par_iter()
            .map(|(id, paths)| {
                let v = &nodes[*id].value;
                let pts: Vec<Vec<f64>> = paths
                    .iter()
                    .map(|&m| ens.value(m, k + 1).iter().zip(v).map(|(x, c)| x - c).collect())
                    .collect();
                let clusters = lloyd(&pts, b, derive_seed(opts.seed, *id as u64), opts.max_iter);
                let red = (clusters.len() < b).then_some(Reduction { node: *id, requested: b, used: clusters.len() });
                let mapped = clusters.into_iter().map(|c| c.into_iter().map(|i| paths[i]).collect()).collect();
                (mapped, red)
            })
            .collect();
        let mut next = Vec::new();
        for ((id, paths), (clusters, red)) in frontier.iter().zip(parts) {
            reductions.extend(red);
            let parent_value = nodes[*id].value.clone();
            let total = paths.len() as f64;
            let mut children: Vec<(Vec<f64>, f64, Vec<usize>)> = clusters
                .into_iter()
                .map(|c| (mean_at(ens, &c, k + 1), c.len() as f64 / total, c))
                .collect();
            children.sort_by(|a, b| lex_cmp(&a.0, &b.0));
            if opts.hold_single && children.len() == 1 {
                children[0].0 = parent_value.clone();
            } else if opts.center_increments {
                let mut shift = vec![0.0; d];
                for j in 0..d {
                    shift[j] = children
                        .iter()
                        .map(|(v, p, _)| p * (v[j] - parent_value[j]))
                        .collect::<KahanSum>()
                        .value();
                }
                for (v, _, _) in children.iter_mut() {
                    for j in 0..d {
                        v[j] -= shift[j];
                    }
                }
            }
            for (value, prob, members) in children {
                let cid = nodes.len();
                nodes.push(Node { id: cid, k: k + 1, value, noise: None, parent: Some(*id), children: vec![] });
                nodes[*id].children.push(Edge { child: cid, prob });
                next.push((cid, members));
            }
        }
        frontier = next;
    }

    let mut leaf_of_path = vec![0; ens.n_paths];
    for (id, paths) in &frontier {
        for &m in paths {
            leaf_of_path[m] = *id;
        }
    }
    if !reductions.is_empty() {
        tracing::warn!(count = reductions.len(), "cluster counts reduced at some nodes");
    }
    Ok(TreeBuild { tree: ScenarioTree { grid: ens.grid, dim: d, nodes }, leaf_of_path, reductions })
}

fn mean_at(ens: &PathEnsemble, paths: &[usize], k: usize) -> Vec<f64> {
    let n = paths.len() as f64;
    (0..ens.dim)
        .map(|j| paths.iter().map(|&m| ens.value(m, k)[j]).collect::<KahanSum>().value() / n)
        .collect()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with farthest-point seeding; returns clusters as sorted
/// point-index lists. Ties go to the lowest index.
fn lloyd(pts: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Vec<Vec<usize>> {
    let n = pts.len();
    let mut sorted: Vec<&Vec<f64>> = pts.iter().collect();
    sorted.sort_by(|a, b| lex_cmp(a, b));
    sorted.dedup_by(|a, b| a == b);
    let k = k.min(sorted.len()).min(n);
    if k <= 1 {
        return vec![(0..n).collect()];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![pts[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let mut best = 0;
        for i in 1..n {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        centers.push(pts[best].clone());
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(&pts[i], &pts[best]));
        }
    }

    let d = pts[0].len();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, p) in pts.iter().enumerate() {
            let mut best = 0;
            let mut bd = sq_dist(p, &centers[0]);
            for (c, ctr) in centers.iter().enumerate().skip(1) {
                let dd = sq_dist(p, ctr);
                if dd < bd {
                    bd = dd;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![KahanSum::new(); d]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, p) in pts.iter().enumerate() {
            counts[assign[i]] += 1;
            for j in 0..d {
                sums[assign[i]][j].add(p[j]);
            }
        }
        for c in 0..centers.len() {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[c][j] = sums[c][j].value() / counts[c] as f64;
                }
            }
        }
    }
    let mut clusters = vec![Vec::new(); centers.len()];
    for (i, a) in assign.iter().enumerate() {
        clusters[*a].push(i);
    }
    clusters.retain(|c| !c.is_empty());
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process_sim::{constant_ensemble, simulate_fbm, PathEnsemble, ProcessModel, TimeGrid};
    use crate::scenario_tree::validate_tree;

    #[test]
    fn constant_paths_give_chain() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let e = constant_ensemble(&[1.5], g, 20).unwrap();
        let b = build_tree(&e, &[3, 3, 3, 3]).unwrap();
        assert_eq!(b.tree.len(), 5);
        assert!(b.tree.nodes.iter().all(|n| n.value == vec![1.5]));
        assert!(b.tree.nodes.iter().flat_map(|n| &n.children).all(|e| e.prob == 1.0));
        assert!(b.reduced());
    }

    #[test]
    fn two_paths_split_evenly() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let data = vec![0.0, 1.0, 2.0, 0.0, -1.0, -2.0];
        let e = PathEnsemble::new(g, 1, data, vec![0, 1], ProcessModel::Constant { value: vec![0.0] }).unwrap();
        let b = build_tree(&e, &[2, 2]).unwrap();
        let leaves = b.tree.leaves();
        assert_eq!(leaves.len(), 2);
        let probs = b.tree.node_probs();
        for l in &leaves {
            assert_eq!(probs[*l], 0.5);
        }
        assert_eq!(b.tree.node(b.leaf_of_path[0]).value, vec![2.0]);
        assert_eq!(b.tree.node(b.leaf_of_path[1]).value, vec![-2.0]);
    }

    #[test]
    fn node_values_are_conditional_means() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let e = simulate_fbm(0.5, 1, g, 10_000, 99).unwrap();
        let b = build_tree(&e, &[3, 3, 3]).unwrap();
        assert!(validate_tree(&b.tree).ok());
        let t = &b.tree;
        for node in &t.nodes {
            let members: Vec<usize> = (0..e.n_paths)
                .filter(|&m| t.is_ancestor(node.id, b.leaf_of_path[m]))
                .collect();
            let mean = members.iter().map(|&m| e.value(m, node.k)[0]).sum::<f64>() / members.len() as f64;
            assert!((mean - node.value[0]).abs() < 1e-12, "node {}", node.id);
        }
        for level in t.levels() {
            let p: f64 = level.iter().map(|i| t.node_probs()[*i]).sum();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn centering_makes_martingale() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let e = simulate_fbm(0.5, 1, g, 500, 3).unwrap();
        let opts = BuildOptions { center_increments: true, ..Default::default() };
        let t = build_tree_with(&e, &[2, 2, 2], &opts).unwrap().tree;
        for n in t.nodes.iter().filter(|n| !n.is_leaf()) {
            let m: f64 = n.children.iter().map(|c| c.prob * t.node(c.child).value[0]).sum();
            assert!((m - n.value[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let e = simulate_fbm(0.5, 2, g, 300, 3).unwrap();
        let a = build_tree(&e, &[3, 2, 2]).unwrap();
        let b = build_tree(&e, &[3, 2, 2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_branching() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let e = constant_ensemble(&[0.0], g, 2).unwrap();
        assert!(build_tree(&e, &[2, 2]).is_err());
        assert!(build_tree(&e, &[2, 0, 2]).is_err());
    }
}
