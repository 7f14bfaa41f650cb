use super::geometry::{support_geometry, Hull};
use super::lp::{Cmp, Lp, LpOutcome};
use super::{achieved, AtomicLaw, MomentFunction, TiltError, TiltMethod, TiltWeights};
use crate::numeric::{norm, KahanSum};

pub const DEFAULT_F_MIN: f64 = 1e-8;

/// Minimum mass required in `B(0, δ/2)` for the concentration stage.
const P_FLOOR: f64 = 1e-6;
/// Relative margin keeping weights strictly above `f_min` after renormalization.
const LB_MARGIN: f64 = 1e-9;
const BISECT_STEPS: usize = 40;

/// Returns all-ones weights for `δ_0`, otherwise [`solve_tilt`].
pub fn tilt_or_identity(law: &AtomicLaw, eta: f64, w: &MomentFunction, f_min: f64) -> Result<TiltWeights, TiltError> {
    if law.is_dirac_zero(1e-12) {
        return Ok(identity(law, eta, w, f_min));
    }
    solve_tilt(law, eta, w, f_min)
}

fn identity(law: &AtomicLaw, eta: f64, w: &MomentFunction, f_min: f64) -> TiltWeights {
    let f = vec![1.0; law.len()];
    let achieved = achieved(law, &f, eta, w);
    TiltWeights { f, achieved, eta, f_min, cap_hit: false, method: TiltMethod::Identity }
}

/// Strictly positive weights with unit mass, zero mean, w-moment below `eta`
/// and tail mass `Σ_{|y|≥η} f p` below `eta`.
///
/// First concentrates on a small ball around 0 and corrects the mean with a
/// cheapest residual weight (two stages). If that misses a constraint the
/// exact problem is solved as one LP minimising the larger of the two budgets.
pub fn solve_tilt(law: &AtomicLaw, eta: f64, w: &MomentFunction, f_min: f64) -> Result<TiltWeights, TiltError> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(TiltError::Param(format!("eta must be positive, got {eta}")));
    }
    if !(f_min > 0.0 && f_min < 1.0) {
        return Err(TiltError::Param(format!("f_min must lie in (0, 1), got {f_min}")));
    }
    w.validate()?;
    if law.is_dirac_zero(1e-12) {
        return Ok(identity(law, eta, w, f_min));
    }
    let geom = support_geometry(law);
    if !geom.zero_in_relative_interior {
        let reason = if geom.zero_in_affine_hull {
            format!("0 lies on the boundary or outside the convex hull (affine dimension {})", geom.affine_dim)
        } else {
            format!("0 is outside the affine hull (affine dimension {})", geom.affine_dim)
        };
        return Err(TiltError::GeometryViolation { reason });
    }
    let hull = Hull::of(law);
    let prob = Problem::new(law, &hull, w);

    if geom.mass_in_ball(eta) == 0.0 {
        return Err(TiltError::InfeasibleTilt { eta, min_feasible_eta: prob.min_feasible_eta(eta, f_min) });
    }
    if let Some(f) = prob.two_stage(eta, f_min) {
        if let Some(t) = finish(law, f, eta, w, f_min, TiltMethod::TwoStage) {
            return Ok(t);
        }
    }
    if let Some(f) = prob.exact(eta, f_min) {
        if let Some(t) = finish(law, f, eta, w, f_min, TiltMethod::ExactLp) {
            return Ok(t);
        }
    }
    Err(TiltError::InfeasibleTilt { eta, min_feasible_eta: prob.min_feasible_eta(eta, f_min) })
}

fn finish(law: &AtomicLaw, mut f: Vec<f64>, eta: f64, w: &MomentFunction, f_min: f64, method: TiltMethod) -> Option<TiltWeights> {
    let mass = f.iter().zip(&law.probs).map(|(a, p)| a * p).collect::<KahanSum>().value();
    if !(mass > 0.0) {
        return None;
    }
    for v in f.iter_mut() {
        *v /= mass;
    }
    let achieved = achieved(law, &f, eta, w);
    let cap_hit = f.iter().any(|v| *v > 1.0 / f_min);
    let t = TiltWeights { f, achieved, eta, f_min, cap_hit, method };
    if t.satisfied() {
        if cap_hit {
            tracing::warn!(eta, "tilt weight exceeds 1/f_min");
        }
        Some(t)
    } else {
        None
    }
}

struct Problem<'a> {
    law: &'a AtomicLaw,
    /// Hull coordinates `Uᵀy_i` of every atom.
    proj: Vec<Vec<f64>>,
    radius: Vec<f64>,
    wv: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(law: &'a AtomicLaw, hull: &Hull, w: &MomentFunction) -> Self {
        let proj = law.atoms.iter().map(|a| hull.project(a)).collect();
        let radius: Vec<f64> = law.atoms.iter().map(|a| norm(a)).collect();
        let wv = radius.iter().map(|r| w.eval_norm(*r)).collect();
        Self { law, proj, radius, wv }
    }

    fn n(&self) -> usize {
        self.law.len()
    }

    fn rank(&self) -> usize {
        self.proj[0].len()
    }

    /// Concentration weight `m` on `B(0, δ)` plus an LP residual `r` that cancels
    /// the mean of `m`; returns `r + m` (unnormalized).
    fn two_stage(&self, eta: f64, f_min: f64) -> Option<Vec<f64>> {
        let n = self.n();
        let p = &self.law.probs;
        let delta_w = (0..n)
            .filter(|&i| self.wv[i] > eta / 2.0)
            .map(|i| self.radius[i])
            .fold(f64::INFINITY, f64::min);
        let delta = eta.min(delta_w);
        let inner: f64 = (0..n).filter(|&i| self.radius[i] < delta / 2.0).map(|i| p[i]).sum();
        if inner < P_FLOOR {
            return None;
        }
        let ball: Vec<bool> = self.radius.iter().map(|r| *r < delta).collect();
        let p_ball = (0..n).filter(|&i| ball[i]).map(|i| p[i]).collect::<KahanSum>().value();
        let m: Vec<f64> = ball.iter().map(|b| if *b { 1.0 / p_ball } else { 0.0 }).collect();

        let r_lb = f_min * (1.0 + eta) * (1.0 + LB_MARGIN);
        if r_lb >= eta / 2.0 {
            return None;
        }
        let mut lp = Lp::new(n);
        lp.c = (0..n).map(|i| p[i] * self.wv[i]).collect();
        for k in 0..self.rank() {
            let row: Vec<f64> = (0..n).map(|i| p[i] * self.proj[i][k]).collect();
            let c_k = (0..n).map(|i| p[i] * m[i] * self.proj[i][k]).collect::<KahanSum>().value();
            let lb_k = row.iter().copied().collect::<KahanSum>().value() * r_lb;
            lp.row(row, Cmp::Eq, -c_k - lb_k);
        }
        lp.row(p.clone(), Cmp::Le, eta / 2.0 - r_lb);
        match lp.solve() {
            LpOutcome::Optimal { x, .. } => Some((0..n).map(|i| r_lb + x[i] + m[i]).collect()),
            _ => None,
        }
    }

    /// `min t` over `q ≥ f_lb·p` with unit mass, zero mean, `Σ q w ≤ ηt` and
    /// tail mass `≤ ηt`. Returns the optimal `t` and weights `f = q/p`.
    fn epigraph(&self, eta: f64, f_min: f64) -> Option<(f64, Vec<f64>)> {
        let n = self.n();
        let p = &self.law.probs;
        let f_lb = f_min * (1.0 + LB_MARGIN);
        let sum_p = p.iter().copied().collect::<KahanSum>().value();
        let mut lp = Lp::new(n + 1);
        lp.c[n] = 1.0;
        let mut mass = vec![1.0; n + 1];
        mass[n] = 0.0;
        lp.row(mass, Cmp::Eq, 1.0 - f_lb * sum_p);
        for k in 0..self.rank() {
            let mut row: Vec<f64> = (0..n).map(|i| self.proj[i][k]).collect();
            let rhs = -f_lb * (0..n).map(|i| p[i] * row[i]).collect::<KahanSum>().value();
            row.push(0.0);
            lp.row(row, Cmp::Eq, rhs);
        }
        let mut wrow: Vec<f64> = self.wv.clone();
        let w_lb = f_lb * (0..n).map(|i| p[i] * self.wv[i]).collect::<KahanSum>().value();
        wrow.push(-eta);
        lp.row(wrow, Cmp::Le, -w_lb);
        let tail: Vec<bool> = self.radius.iter().map(|r| *r >= eta).collect();
        let mut trow: Vec<f64> = tail.iter().map(|t| if *t { 1.0 } else { 0.0 }).collect();
        let t_lb = f_lb * (0..n).filter(|&i| tail[i]).map(|i| p[i]).collect::<KahanSum>().value();
        trow.push(-eta);
        lp.row(trow, Cmp::Le, -t_lb);
        match lp.solve() {
            LpOutcome::Optimal { x, obj } => {
                let f = (0..n).map(|i| f_lb + x[i] / p[i]).collect();
                Some((obj, f))
            }
            _ => None,
        }
    }

    fn exact(&self, eta: f64, f_min: f64) -> Option<Vec<f64>> {
        match self.epigraph(eta, f_min) {
            Some((t, f)) if t < 1.0 => Some(f),
            _ => None,
        }
    }

    fn feasible(&self, eta: f64, f_min: f64) -> bool {
        matches!(self.epigraph(eta, f_min), Some((t, _)) if t < 1.0)
    }

    /// Bisection on `η` (feasibility is monotone in `η`); returns a feasible value.
    fn min_feasible_eta(&self, eta: f64, f_min: f64) -> f64 {
        let wmax = self.wv.iter().fold(0.0f64, |a, v| a.max(*v));
        let rmax = self.radius.iter().fold(0.0f64, |a, v| a.max(*v));
        let mut hi = (wmax.max(rmax) + 1.0).max(eta);
        if !self.feasible(hi, f_min) {
            return f64::INFINITY;
        }
        let mut lo = 0.0;
        if self.feasible(eta, f_min) {
            hi = eta;
        } else {
            lo = eta;
        }
        for _ in 0..BISECT_STEPS {
            let mid = 0.5 * (lo + hi);
            if self.feasible(mid, f_min) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(law: &AtomicLaw, t: &TiltWeights) {
        assert!(t.satisfied(), "{t:?}");
        let recomputed = achieved(law, &t.f, t.eta, &MomentFunction::Abs);
        assert!((recomputed.mass - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn dirac_gives_ones() {
        let law = AtomicLaw::scalar(&[(0.0, 1.0)]).unwrap();
        let t = solve_tilt(&law, 0.1, &MomentFunction::Abs, DEFAULT_F_MIN).unwrap();
        assert_eq!(t.f, vec![1.0]);
        assert_eq!(tilt_or_identity(&law, 0.1, &MomentFunction::Abs, DEFAULT_F_MIN).unwrap().method, TiltMethod::Identity);
    }

    #[test]
    fn no_mass_near_zero_is_infeasible() {
        let law = AtomicLaw::scalar(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        match solve_tilt(&law, 0.5, &MomentFunction::Abs, DEFAULT_F_MIN) {
            Err(TiltError::InfeasibleTilt { eta, min_feasible_eta }) => {
                assert_eq!(eta, 0.5);
                assert!(min_feasible_eta > 1.0 && min_feasible_eta < 1.01, "{min_feasible_eta}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn three_atom_example() {
        let law = AtomicLaw::scalar(&[(-1.0, 0.25), (0.01, 0.5), (2.0, 0.25)]).unwrap();
        let t = solve_tilt(&law, 0.1, &MomentFunction::Abs, DEFAULT_F_MIN).unwrap();
        check(&law, &t);
        assert!(t.f.iter().all(|f| *f >= DEFAULT_F_MIN));
    }

    #[test]
    fn geometry_violation() {
        let law = AtomicLaw::scalar(&[(1.0, 0.5), (2.0, 0.5)]).unwrap();
        assert!(matches!(
            tilt_or_identity(&law, 0.1, &MomentFunction::Abs, DEFAULT_F_MIN),
            Err(TiltError::GeometryViolation { .. })
        ));
    }

    #[test]
    fn scaling_preserves_feasibility() {
        let base = [(-0.8, 0.2), (0.005, 0.3), (0.02, 0.2), (1.5, 0.3)];
        for c in [0.1, 1.0, 7.0] {
            let pts: Vec<(f64, f64)> = base.iter().map(|(y, p)| (y * c, *p)).collect();
            let law = AtomicLaw::scalar(&pts).unwrap();
            let t = solve_tilt(&law, 0.1 * c, &MomentFunction::Abs, DEFAULT_F_MIN).unwrap();
            check(&law, &t);
        }
    }

    #[test]
    fn exact_lp_fallback_is_used_when_needed() {
        // Two-stage leaves too much weight on the far atom.
        let law = AtomicLaw::scalar(&[(-0.05, 0.5), (0.04, 0.4), (3.0, 0.1)]).unwrap();
        let w = MomentFunction::GCombo { p: 1.0, inner: 2.0 };
        let t = solve_tilt(&law, 0.2, &w, DEFAULT_F_MIN).unwrap();
        assert!(t.satisfied());
    }

    #[test]
    fn two_dimensional_law() {
        let law = AtomicLaw::new(
            vec![vec![-1.0, 0.0], vec![1.0, 1.0], vec![0.0, -1.0], vec![0.01, 0.01]],
            vec![0.25, 0.25, 0.25, 0.25],
        )
        .unwrap();
        let t = solve_tilt(&law, 0.1, &MomentFunction::Abs, DEFAULT_F_MIN).unwrap();
        assert!(t.satisfied());
        assert!(t.achieved.mean.iter().all(|m| m.abs() <= 1e-10));
    }
}
