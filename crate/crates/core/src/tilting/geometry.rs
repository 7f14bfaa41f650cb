use nalgebra::{DMatrix, SymmetricEigen};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::lp::{Cmp, Lp, LpOutcome};
use super::AtomicLaw;
use crate::numeric::{norm, KahanSum};

const RANK_TOL: f64 = 1e-10;
pub(crate) const LAMBDA_MIN: f64 = 1e-9;

/// Affine hull of the atoms: `center + span(basis)`.
#[derive(Debug, Clone)]
pub(crate) struct Hull {
    pub center: Vec<f64>,
    /// Orthonormal basis vectors of the direction space.
    pub basis: Vec<Vec<f64>>,
}

impl Hull {
    pub fn of(law: &AtomicLaw) -> Self {
        let d = law.dim();
        let n = law.len() as f64;
        let center: Vec<f64> = (0..d)
            .map(|j| law.atoms.iter().map(|a| a[j]).collect::<KahanSum>().value() / n)
            .collect();
        let mut scatter = DMatrix::<f64>::zeros(d, d);
        for a in &law.atoms {
            for i in 0..d {
                for j in 0..d {
                    scatter[(i, j)] += (a[i] - center[i]) * (a[j] - center[j]);
                }
            }
        }
        let eig = SymmetricEigen::new(scatter);
        let sv: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
        let scale = sv.iter().fold(1.0f64, |a, v| a.max(*v));
        let basis = (0..d)
            .filter(|&k| sv[k] > RANK_TOL * scale)
            .map(|k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect();
        Self { center, basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Coordinates `Uᵀy` of a vector in the direction space.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|u| u.iter().zip(y).map(|(a, b)| a * b).sum()).collect()
    }

    /// Whether the origin lies in the affine hull.
    pub fn contains_origin(&self) -> bool {
        let c = &self.center;
        let coef = self.project(c);
        let mut resid = c.clone();
        for (u, k) in self.basis.iter().zip(&coef) {
            for (r, v) in resid.iter_mut().zip(u) {
                *r -= k * v;
            }
        }
        norm(&resid) <= RANK_TOL * (1.0 + norm(c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SupportGeometry {
    pub affine_dim: usize,
    pub zero_in_affine_hull: bool,
    pub zero_in_relative_interior: bool,
    /// `(|y_i|, p_i)` sorted by radius.
    radii: Vec<(f64, f64)>,
}

impl SupportGeometry {
    /// `P(|Y| < r)`.
    pub fn mass_in_ball(&self, r: f64) -> f64 {
        self.radii.iter().take_while(|(n, _)| *n < r).map(|(_, p)| *p).collect::<KahanSum>().value()
    }
}

/// Affine dimension of the support and whether 0 is a strictly positive
/// convex combination of all atoms (margin `λ_i ≥ 1e−9`).
pub fn support_geometry(law: &AtomicLaw) -> SupportGeometry {
    let hull = Hull::of(law);
    let mut radii: Vec<(f64, f64)> = law.atoms.iter().zip(&law.probs).map(|(a, p)| (norm(a), *p)).collect();
    radii.sort_by(|a, b| a.0.total_cmp(&b.0));
    let in_hull = hull.contains_origin();
    let interior = if hull.dim() == 0 {
        law.is_dirac_zero(1e-12)
    } else {
        in_hull && interior_lp(law, &hull)
    };
    SupportGeometry { affine_dim: hull.dim(), zero_in_affine_hull: in_hull, zero_in_relative_interior: interior, radii }
}

fn interior_lp(law: &AtomicLaw, hull: &Hull) -> bool {
    let n = law.len();
    if n as f64 * LAMBDA_MIN >= 1.0 {
        return false;
    }
    let proj: Vec<Vec<f64>> = law.atoms.iter().map(|a| hull.project(a)).collect();
    let mut lp = Lp::new(n);
    lp.row(vec![1.0; n], Cmp::Eq, 1.0 - n as f64 * LAMBDA_MIN);
    for k in 0..hull.dim() {
        let row: Vec<f64> = proj.iter().map(|p| p[k]).collect();
        let rhs = -LAMBDA_MIN * row.iter().copied().collect::<KahanSum>().value();
        lp.row(row, Cmp::Eq, rhs);
    }
    matches!(lp.solve(), LpOutcome::Optimal { .. })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_at_zero() {
        let g = support_geometry(&AtomicLaw::scalar(&[(0.0, 1.0)]).unwrap());
        assert_eq!(g.affine_dim, 0);
        assert!(g.zero_in_relative_interior);
    }

    #[test]
    fn symmetric_pair() {
        let g = support_geometry(&AtomicLaw::scalar(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap());
        assert_eq!(g.affine_dim, 1);
        assert!(g.zero_in_relative_interior);
        assert_eq!(g.mass_in_ball(1.0), 0.0);
        assert_eq!(g.mass_in_ball(1.5), 1.0);
    }

    #[test]
    fn one_sided() {
        let g = support_geometry(&AtomicLaw::scalar(&[(1.0, 0.5), (2.0, 0.5)]).unwrap());
        assert_eq!(g.affine_dim, 1);
        assert!(!g.zero_in_relative_interior);
    }

    #[test]
    fn zero_on_boundary_is_not_interior() {
        let g = support_geometry(&AtomicLaw::scalar(&[(0.0, 0.5), (2.0, 0.5)]).unwrap());
        assert!(!g.zero_in_relative_interior);
    }

    #[test]
    fn planar_segment_in_r2() {
        let law = AtomicLaw::new(vec![vec![-1.0, -2.0], vec![1.0, 2.0], vec![0.5, 1.0]], vec![0.3, 0.3, 0.4]).unwrap();
        let g = support_geometry(&law);
        assert_eq!(g.affine_dim, 1);
        assert!(g.zero_in_affine_hull);
        assert!(g.zero_in_relative_interior);
        let off = AtomicLaw::new(vec![vec![-1.0, 0.0], vec![1.0, 1.0]], vec![0.5, 0.5]).unwrap();
        let g = support_geometry(&off);
        assert!(!g.zero_in_affine_hull);
        assert!(!g.zero_in_relative_interior);
    }

    #[test]
    fn triangle_interior() {
        let law = AtomicLaw::new(vec![vec![-1.0, -1.0], vec![2.0, 0.0], vec![0.0, 2.0]], vec![0.2, 0.3, 0.5]).unwrap();
        let g = support_geometry(&law);
        assert_eq!(g.affine_dim, 2);
        assert!(g.zero_in_relative_interior);
    }
}
