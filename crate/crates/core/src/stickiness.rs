//! Small-ball checks: exact witness search on trees, Monte Carlo on ensembles.

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::numeric::dist;
use crate::process_sim::PathEnsemble;
use crate::scenario_tree::{Coordinate, ScenarioTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StickyReport {
    pub sticky: bool,
    /// Radius used at each node.
    pub kappa: Vec<f64>,
    /// For each node, a leaf whose path from the node stays strictly within `kappa`.
    pub witnesses: Vec<Option<usize>>,
    pub failures: Vec<usize>,
}

/// Constant-radius check on `S`.
pub fn check_sticky_tree(tree: &ScenarioTree, kappa: f64) -> StickyReport {
    check_sticky_with(tree, &vec![kappa; tree.len()], Coordinate::S)
}

/// Per-node radii on either coordinate. Every node of a finite tree has
/// positive probability, so positivity of the small-ball probability is the
/// existence of a witness leaf.
pub fn check_sticky_with(tree: &ScenarioTree, kappa: &[f64], coord: Coordinate) -> StickyReport {
    assert_eq!(kappa.len(), tree.len(), "one kappa per node");
    let values = tree.coord_table(coord);
    let witnesses: Vec<Option<usize>> = (0..tree.len())
        .into_par_iter()
        .map(|v| witness(tree, &values, v, kappa[v]))
        .collect();
    let failures: Vec<usize> = witnesses.iter().enumerate().filter(|(_, w)| w.is_none()).map(|(i, _)| i).collect();
    StickyReport { sticky: failures.is_empty(), kappa: kappa.to_vec(), witnesses, failures }
}

fn witness(tree: &ScenarioTree, values: &[Vec<f64>], v: usize, kappa: f64) -> Option<usize> {
    if !(kappa > 0.0) {
        return None;
    }
    let origin = &values[v];
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        let n = tree.node(u);
        if n.is_leaf() {
            return Some(u);
        }
        for e in n.children.iter().rev() {
            if dist(&values[e.child], origin) < kappa {
                stack.push(e.child);
            }
        }
    }
    None
}

/// `κ* = max_v min_{leaves ℓ below v} max_{u ∈ [v, ℓ]} |X_u − X_v|`; the tree is
/// sticky exactly for `κ > κ*`.
pub fn sticky_threshold(tree: &ScenarioTree, coord: Coordinate) -> f64 {
    let values = tree.coord_table(coord);
    (0..tree.len())
        .into_par_iter()
        .map(|v| best_excursion(tree, &values, v))
        .reduce(|| 0.0, f64::max)
}

fn best_excursion(tree: &ScenarioTree, values: &[Vec<f64>], v: usize) -> f64 {
    let origin = &values[v];
    let mut best = f64::INFINITY;
    let mut stack = vec![(v, 0.0f64)];
    while let Some((u, m)) = stack.pop() {
        if m >= best {
            continue;
        }
        let n = tree.node(u);
        if n.is_leaf() {
            best = m;
            continue;
        }
        for e in &n.children {
            stack.push((e.child, m.max(dist(&values[e.child], origin))));
        }
    }
    best
}

/// How to partition the observed values of coordinate 0 at the conditioning time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Bins {
    /// `n` equal-width bins spanning the observed range.
    Uniform(usize),
    /// Increasing edges; the last bin is closed on the right.
    Edges(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SmallBallRow {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SmallBallTable {
    pub t_index: usize,
    pub kappa: f64,
    pub rows: Vec<SmallBallRow>,
    pub markov: bool,
    pub note: Option<String>,
}

impl SmallBallTable {
    /// Columns `lo,hi,count,estimate,se`; empty bins leave the last two blank.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lo", "hi", "count", "estimate", "se"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([r.lo.to_string(), r.hi.to_string(), r.count.to_string(), opt(r.estimate), opt(r.se)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fraction of paths with `sup_{u ≥ t}|S_u − S_t| < κ` per bin of `S_t`, with
/// binomial standard errors.
pub fn estimate_smallball(ens: &PathEnsemble, t_index: usize, kappa: f64, bins: &Bins) -> SmallBallTable {
    let n = ens.grid.steps;
    assert!(t_index <= n, "t_index beyond the grid");
    assert!(kappa > 0.0, "kappa must be positive");
    let x = ens.marginal(t_index, 0);
    let stays: Vec<bool> = (0..ens.n_paths)
        .into_par_iter()
        .map(|m| {
            let s = ens.value(m, t_index);
            (t_index..=n).all(|k| dist(ens.value(m, k), s) < kappa)
        })
        .collect();
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = match bins {
        Bins::Edges(e) => e.clone(),
        Bins::Uniform(_) if hi <= lo => vec![lo, hi],
        Bins::Uniform(b) => {
            let b = (*b).max(1);
            let mut e: Vec<f64> = (0..=b).map(|i| lo + (hi - lo) * i as f64 / b as f64).collect();
            e[b] = hi;
            e
        }
    };
    let nb = edges.len().saturating_sub(1);
    let mut hits = vec![0usize; nb];
    let mut counts = vec![0usize; nb];
    for (v, s) in x.iter().zip(&stays) {
        let idx = (0..nb).find(|&b| *v >= edges[b] && (*v < edges[b + 1] || (b + 1 == nb && *v <= edges[b + 1])));
        if let Some(b) = idx {
            counts[b] += 1;
            if *s {
                hits[b] += 1;
            }
        }
    }
    let rows = (0..nb)
        .map(|b| {
            let c = counts[b];
            let (estimate, se) = if c == 0 {
                (None, None)
            } else {
                let p = hits[b] as f64 / c as f64;
                (Some(p), Some((p * (1.0 - p) / c as f64).sqrt()))
            };
            SmallBallRow { lo: edges[b], hi: edges[b + 1], count: c, estimate, se }
        })
        .collect();
    let markov = ens.is_markov();
    let note = (!markov).then(|| {
        "binning on S_t conditions only on the current value; for a non-Markov model this is not the full conditional probability".to_string()
    });
    SmallBallTable { t_index, kappa, rows, markov, note }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process_sim::{constant_ensemble, simulate_levy, simulate_sde, DriftId, LevyParams, TimeGrid, VolId};
    use crate::scenario_tree::{build_tree, ScenarioTree};

    fn chain(values: &[f64]) -> ScenarioTree {
        let grid = TimeGrid::new(1.0, values.len() - 1).unwrap();
        let rows: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, v)| (if i == 0 { None } else { Some(i - 1) }, 1.0, vec![*v]))
            .collect();
        ScenarioTree::from_rows(grid, 1, &rows).unwrap()
    }

    fn binary(depth: usize) -> ScenarioTree {
        let grid = TimeGrid::new(1.0, depth).unwrap();
        let mut rows = vec![(None, 1.0, vec![0.0])];
        let mut frontier = vec![0usize];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &v in &frontier {
                let x = rows[v].2[0];
                for s in [-1.0, 1.0] {
                    rows.push((Some(v), 0.5, vec![x + s]));
                    next.push(rows.len() - 1);
                }
            }
            frontier = next;
        }
        ScenarioTree::from_rows(grid, 1, &rows).unwrap()
    }

    #[test]
    fn constant_chain_is_sticky() {
        let t = chain(&[2.0; 5]);
        for k in [1e-6, 0.1, 10.0] {
            let r = check_sticky_tree(&t, k);
            assert!(r.sticky);
            assert!(r.witnesses.iter().all(|w| *w == Some(4)));
        }
        assert_eq!(sticky_threshold(&t, Coordinate::S), 0.0);
    }

    #[test]
    fn deterministic_steps_fail_everywhere_inside() {
        let t = binary(3);
        let r = check_sticky_tree(&t, 0.5);
        assert!(!r.sticky);
        let internal: Vec<usize> = t.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.id).collect();
        assert_eq!(r.failures, internal);
        assert_eq!(sticky_threshold(&t, Coordinate::S), 1.0);
    }

    #[test]
    fn monotone_in_kappa() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let e = simulate_sde(DriftId::Zero, VolId::Identity, &[0.0], g, 2000, 5).unwrap();
        let t = build_tree(&e, &[3, 3, 3, 3]).unwrap().tree;
        let star = sticky_threshold(&t, Coordinate::S);
        assert!(!check_sticky_tree(&t, star).sticky);
        for k in [star * 1.0001, star * 2.0] {
            assert!(check_sticky_tree(&t, k).sticky);
        }
    }

    #[test]
    fn smallball_constant_and_drift() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let c = constant_ensemble(&[1.0], g, 100).unwrap();
        let tab = estimate_smallball(&c, 0, 0.5, &Bins::Uniform(4));
        assert_eq!(tab.rows.len(), 1);
        assert_eq!(tab.rows[0].estimate, Some(1.0));
        assert_eq!(tab.rows[0].se, Some(0.0));

        let p = LevyParams::new(1.0, 0.0, vec![]).unwrap();
        let d = simulate_levy(&p, g, 50, 1).unwrap();
        let tab = estimate_smallball(&d, 0, 0.5, &Bins::Uniform(3));
        assert!(tab.rows.iter().all(|r| r.estimate.is_none() || r.estimate == Some(0.0)));
    }

    #[test]
    fn empty_bins_are_unavailable() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let e = simulate_sde(DriftId::Zero, VolId::Identity, &[0.0], g, 500, 2).unwrap();
        let tab = estimate_smallball(&e, 4, 0.5, &Bins::Edges(vec![-100.0, -50.0, 0.0, 100.0]));
        assert_eq!(tab.rows[0].count, 0);
        assert!(tab.rows[0].estimate.is_none());
        assert_eq!(tab.rows[1].count + tab.rows[2].count, 500);
    }

    #[test]
    fn smallball_decreases_with_kappa() {
        let g = TimeGrid::new(1.0, 32).unwrap();
        let e = simulate_sde(DriftId::Zero, VolId::Identity, &[0.0], g, 20_000, 8).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for k in [2.0, 1.5, 1.0, 0.75, 0.5] {
            let r = &estimate_smallball(&e, 0, k, &Bins::Uniform(1)).rows[0];
            let (p, se) = (r.estimate.unwrap(), r.se.unwrap());
            assert!((0.0..=1.0).contains(&p));
            if let Some((pp, pse)) = prev {
                assert!(p <= pp + 2.0 * (se + pse));
            }
            prev = Some((p, se));
        }
    }
}
