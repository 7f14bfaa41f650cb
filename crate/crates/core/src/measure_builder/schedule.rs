use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::MeasureError;
use crate::numeric::dist;
use crate::scenario_tree::{Coordinate, ScenarioTree};

/// One step of the schedule: from a stage-(n−1) node to its stage-n stop nodes.
/// A terminated path (its stop node is a leaf) maps to itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Transition {
    pub from: usize,
    pub stops: Vec<usize>,
}

impl Transition {
    pub fn terminated(&self) -> bool {
        self.stops.len() == 1 && self.stops[0] == self.from
    }
}

/// ε-increment stopping times on a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StoppingSchedule {
    pub eps: f64,
    pub coord: Coordinate,
    /// Stage antichains; stage 0 is the start set. Terminated paths repeat
    /// their leaf in later stages.
    pub stages: Vec<Vec<usize>>,
    /// `transitions[n−1]` leads from stage `n−1` to stage `n`.
    pub transitions: Vec<Vec<Transition>>,
    /// Stage of each stop node (`None` for nodes that are not stop nodes).
    pub stage_of: Vec<Option<usize>>,
    /// Previous stop node of each stop node at stage ≥ 1.
    pub prev_stop: Vec<Option<usize>>,
}

impl StoppingSchedule {
    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Stop nodes `τ_0, τ_1, …` along the path to `leaf`, without repetition.
    pub fn path_stops(&self, tree: &ScenarioTree, leaf: usize) -> Vec<usize> {
        tree.ancestry(leaf).into_iter().filter(|u| self.stage_of[*u].is_some()).collect()
    }

    /// Whether `node` lies strictly before the start antichain.
    pub fn is_prestart(&self, tree: &ScenarioTree, node: usize) -> bool {
        !tree.ancestry(node).iter().any(|u| self.stage_of[*u] == Some(0))
    }
}

/// Walks every path from its start node and stops at the first later node
/// whose coordinate moved by at least `eps`, or at the leaf.
pub fn stopping_schedule(
    tree: &ScenarioTree,
    eps: f64,
    coord: Coordinate,
    start: &[usize],
) -> Result<StoppingSchedule, MeasureError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(MeasureError::Param(format!("eps must be positive, got {eps}")));
    }
    let n = tree.len();
    let values = tree.coord_table(coord);
    let mut is_start = vec![false; n];
    for s in start {
        if *s >= n {
            return Err(MeasureError::Param(format!("start node {s} does not exist")));
        }
        is_start[*s] = true;
    }
    // tau[u]: the most recent stop node at or above u.
    let mut tau: Vec<Option<usize>> = vec![None; n];
    let mut stage_of: Vec<Option<usize>> = vec![None; n];
    let mut prev_stop: Vec<Option<usize>> = vec![None; n];
    for u in 0..n {
        let started = tree.node(u).parent.and_then(|p| tau[p]);
        if is_start[u] {
            if started.is_some() {
                return Err(MeasureError::Param(format!("start node {u} lies below another start node")));
            }
            tau[u] = Some(u);
            stage_of[u] = Some(0);
            continue;
        }
        let Some(t) = started else {
            if tree.node(u).is_leaf() {
                return Err(MeasureError::Param(format!("leaf {u} is not covered by the start set")));
            }
            continue;
        };
        if dist(&values[u], &values[t]) >= eps || tree.node(u).is_leaf() {
            tau[u] = Some(u);
            stage_of[u] = Some(stage_of[t].unwrap() + 1);
            prev_stop[u] = Some(t);
        } else {
            tau[u] = Some(t);
        }
    }

    let last = stage_of.iter().flatten().copied().max().unwrap_or(0);
    let mut stages: Vec<Vec<usize>> = vec![Vec::new(); last + 1];
    let mut terminated: Vec<Vec<usize>> = vec![Vec::new(); last + 1];
    for (u, st) in stage_of.iter().enumerate() {
        if let Some(s) = *st {
            stages[s].push(u);
            if tree.node(u).is_leaf() {
                terminated[s].push(u);
            }
        }
    }
    let mut carried: Vec<usize> = Vec::new();
    for s in 0..=last {
        stages[s].extend(carried.iter().copied());
        stages[s].sort_unstable();
        carried.extend(terminated[s].iter().copied());
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..n {
        if let (Some(p), Some(s)) = (prev_stop[u], stage_of[u]) {
            if s > 0 {
                children[p].push(u);
            }
        }
    }
    let transitions = (1..=last)
        .map(|s| {
            stages[s - 1]
                .iter()
                .map(|&v| {
                    if tree.node(v).is_leaf() {
                        Transition { from: v, stops: vec![v] }
                    } else {
                        Transition { from: v, stops: children[v].clone() }
                    }
                })
                .collect()
        })
        .collect();
    Ok(StoppingSchedule { eps, coord, stages, transitions, stage_of, prev_stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_tree::fixtures::{binary, chain};

    #[test]
    fn constant_process_single_stage() {
        let t = chain(&[1.0; 5]);
        let s = stopping_schedule(&t, 0.1, Coordinate::S, &[0]).unwrap();
        assert_eq!(s.stages, vec![vec![0], vec![4]]);
        assert_eq!(s.transitions[0], vec![Transition { from: 0, stops: vec![4] }]);
    }

    #[test]
    fn first_step_exits() {
        let t = binary(3, 1.0, 0.5);
        let s = stopping_schedule(&t, 0.5, Coordinate::S, &[0]).unwrap();
        assert_eq!(s.stages[1], vec![1, 2]);
        assert_eq!(s.n_stages(), 4);
        for st in &s.stages {
            let p: f64 = st.iter().map(|u| t.node_probs()[*u]).sum();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn terminated_paths_repeat() {
        // Chain moves once by 1 then stays: stages {0}, {1}, {3}.
        let t = chain(&[0.0, 1.0, 1.0, 1.0]);
        let s = stopping_schedule(&t, 0.5, Coordinate::S, &[0]).unwrap();
        assert_eq!(s.stages, vec![vec![0], vec![1], vec![3]]);
        assert_eq!(s.path_stops(&t, 3), vec![0, 1, 3]);
    }

    #[test]
    fn start_set_validation() {
        let t = binary(2, 1.0, 0.5);
        assert!(stopping_schedule(&t, 0.5, Coordinate::S, &[1]).is_err());
        assert!(stopping_schedule(&t, 0.5, Coordinate::S, &[0, 1]).is_err());
        let s = stopping_schedule(&t, 0.5, Coordinate::S, &[1, 5, 6]).unwrap();
        assert_eq!(s.stages[0], vec![1, 5, 6]);
        assert_eq!(s.stages[1], vec![3, 4, 5, 6]);
        assert!(s.is_prestart(&t, 0));
        assert!(s.is_prestart(&t, 2));
        assert!(!s.is_prestart(&t, 3));
    }
}
