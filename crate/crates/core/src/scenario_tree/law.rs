use std::collections::HashMap;

use super::{Coordinate, ScenarioTree, TreeError};
use crate::tilting::AtomicLaw;

const MERGE_TOL: f64 = 1e-12;

/// Law of `X(stop) − X(from)` given `from`, with the atom index of every stop node.
#[derive(Debug, Clone, PartialEq)]
pub struct StopLaw {
    pub law: AtomicLaw,
    /// `atom_of[i]` is the atom that stop node `stops[i]` maps to.
    pub atom_of: Vec<usize>,
    /// Conditional probability of reaching `stops[i]` from `from`.
    pub reach: Vec<f64>,
}

/// Conditional increment law from `from` to the antichain `stops`.
///
/// Errors when a leaf below `from` avoids `stops` (non-covering) or when some
/// stop node is unreachable without passing another one (overlapping).
pub fn conditional_increment_law(
    tree: &ScenarioTree,
    from: usize,
    stops: &[usize],
    coord: Coordinate,
) -> Result<StopLaw, TreeError> {
    let err = |reason: String| TreeError::StopSet { from, reason };
    if stops.is_empty() {
        return Err(err("empty stopping set".into()));
    }
    let mut pos: HashMap<usize, usize> = HashMap::with_capacity(stops.len());
    for (i, s) in stops.iter().enumerate() {
        if *s >= tree.len() {
            return Err(err(format!("node {s} does not exist")));
        }
        if pos.insert(*s, i).is_some() {
            return Err(err(format!("node {s} listed twice")));
        }
    }
    let mut reach = vec![0.0; stops.len()];
    let mut seen = vec![false; stops.len()];
    let mut stack = vec![(from, 1.0f64)];
    while let Some((v, p)) = stack.pop() {
        if let Some(&i) = pos.get(&v) {
            reach[i] = p;
            seen[i] = true;
            continue;
        }
        let n = tree.node(v);
        if n.is_leaf() {
            return Err(err(format!("leaf {v} is not covered")));
        }
        for e in n.children.iter().rev() {
            stack.push((e.child, p * e.prob));
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        let s = stops[i];
        let reason = if tree.is_ancestor(from, s) {
            format!("node {s} lies below another stop node")
        } else {
            format!("node {s} is not a descendant")
        };
        return Err(err(reason));
    }

    let base = tree.coord(from, coord);
    let incs: Vec<Vec<f64>> = stops
        .iter()
        .map(|s| tree.coord(*s, coord).iter().zip(&base).map(|(a, b)| a - b).collect())
        .collect();
    let mut order: Vec<usize> = (0..stops.len()).collect();
    order.sort_by(|&a, &b| {
        incs[a]
            .iter()
            .zip(&incs[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut atoms: Vec<Vec<f64>> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut atom_of = vec![0; stops.len()];
    for i in order {
        let same = atoms.last().is_some_and(|a: &Vec<f64>| {
            a.iter().zip(&incs[i]).all(|(x, y)| (x - y).abs() <= MERGE_TOL)
        });
        if !same {
            atoms.push(incs[i].clone());
            probs.push(0.0);
        }
        *probs.last_mut().unwrap() += reach[i];
        atom_of[i] = atoms.len() - 1;
    }
    let law = AtomicLaw::new(atoms, probs).map_err(|e| err(e.to_string()))?;
    Ok(StopLaw { law, atom_of, reach })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_tree::fixtures::{binary, chain};

    #[test]
    fn children_give_one_step_law() {
        let t = binary(2, 1.0, 0.3);
        let l = conditional_increment_law(&t, 0, &[1, 2], Coordinate::S).unwrap();
        assert_eq!(l.law.atoms, vec![vec![-1.0], vec![1.0]]);
        assert_eq!(l.law.probs, vec![0.7, 0.3]);
    }

    #[test]
    fn chain_to_leaf() {
        let t = chain(&[1.0, 3.0, 4.5]);
        let l = conditional_increment_law(&t, 0, &[2], Coordinate::S).unwrap();
        assert_eq!(l.law.atoms, vec![vec![3.5]]);
        assert_eq!(l.law.probs, vec![1.0]);
    }

    #[test]
    fn grandchildren_aggregate() {
        let t = binary(2, 1.0, 0.5);
        let l = conditional_increment_law(&t, 0, &[3, 4, 5, 6], Coordinate::S).unwrap();
        assert_eq!(l.law.atoms, vec![vec![-2.0], vec![0.0], vec![2.0]]);
        assert_eq!(l.law.probs, vec![0.25, 0.5, 0.25]);
        assert_eq!(l.atom_of, vec![0, 1, 1, 2]);
        let mean: f64 = l.law.atoms.iter().zip(&l.law.probs).map(|(a, p)| a[0] * p).sum();
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn mixed_depth_antichain() {
        let t = binary(2, 1.0, 0.25);
        let l = conditional_increment_law(&t, 0, &[1, 5, 6], Coordinate::S).unwrap();
        let total: f64 = l.law.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let direct = -0.75 + 0.25 * 0.75 * 0.0 + 0.25 * 0.25 * 2.0;
        let mean: f64 = l.law.atoms.iter().zip(&l.law.probs).map(|(a, p)| a[0] * p).sum();
        assert!((mean - direct).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_sets() {
        let t = binary(2, 1.0, 0.5);
        assert!(conditional_increment_law(&t, 0, &[1], Coordinate::S).is_err());
        assert!(conditional_increment_law(&t, 0, &[1, 2, 3], Coordinate::S).is_err());
        assert!(conditional_increment_law(&t, 1, &[3, 4, 5], Coordinate::S).is_err());
    }
}
