use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{PathEnsemble, ProcessModel, SimError};

/// Registered continuous maps `f(x, l)`, applied coordinatewise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ComposeFn {
    /// `f(x, l) = x`
    First,
    /// `f(x, l) = x + l`
    Sum,
    /// `f(x, l) = x·l`
    Product,
    /// `f(x, l) = |x|^{1/3}`
    CubeRootAbs,
}

impl ComposeFn {
    pub fn apply(self, x: f64, l: f64) -> f64 {
        match self {
            ComposeFn::First => x,
            ComposeFn::Sum => x + l,
            ComposeFn::Product => x * l,
            ComposeFn::CubeRootAbs => x.abs().cbrt(),
        }
    }
}

/// `S = f(X, L)` pathwise. The two ensembles should come from independent seeds;
/// that is not checked.
pub fn compose(x: &PathEnsemble, l: &PathEnsemble, f: ComposeFn) -> Result<PathEnsemble, SimError> {
    if x.grid != l.grid {
        return Err(SimError::Mismatch(format!("grids differ: {:?} vs {:?}", x.grid, l.grid)));
    }
    if x.n_paths != l.n_paths {
        return Err(SimError::Mismatch(format!("{} vs {} paths", x.n_paths, l.n_paths)));
    }
    if x.dim != l.dim {
        return Err(SimError::Mismatch(format!("dimension {} vs {}", x.dim, l.dim)));
    }
    let data = x.data.iter().zip(&l.data).map(|(a, b)| f.apply(*a, *b)).collect();
    let model = ProcessModel::Composed {
        f,
        x: Box::new(x.model.clone()),
        l: Box::new(l.model.clone()),
    };
    PathEnsemble::new(x.grid, x.dim, data, x.seeds.clone(), model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process_sim::{constant_ensemble, simulate_fbm, simulate_sde, DriftId, TimeGrid, VolId};

    fn bm(seed: u64) -> PathEnsemble {
        simulate_sde(DriftId::Zero, VolId::Identity, &[0.0], TimeGrid::new(1.0, 8).unwrap(), 50, seed).unwrap()
    }

    #[test]
    fn projection_and_identity() {
        let x = bm(1);
        let l = bm(2);
        assert_eq!(compose(&x, &l, ComposeFn::First).unwrap().data, x.data);
        let zero = constant_ensemble(&[0.0], x.grid, 50).unwrap();
        assert_eq!(compose(&x, &zero, ComposeFn::Sum).unwrap().data, x.data);
    }

    #[test]
    fn cube_root_is_exact() {
        let x = bm(3);
        let out = compose(&x, &bm(4), ComposeFn::CubeRootAbs).unwrap();
        for (a, b) in x.data.iter().zip(&out.data) {
            assert_eq!(*b, a.abs().cbrt());
        }
        assert!(!out.is_markov());
    }

    #[test]
    fn grid_mismatch() {
        let x = bm(1);
        let y = simulate_fbm(0.5, 1, TimeGrid::new(1.0, 4).unwrap(), 50, 1).unwrap();
        assert!(matches!(compose(&x, &y, ComposeFn::Sum), Err(SimError::Mismatch(_))));
    }
}
