//! Dense two-phase simplex with Bland's rule for `min cᵀx` subject to linear
//! rows and `x ≥ 0`. Sized for tilting problems: few rows, many columns.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) struct Lp {
    pub n: usize,
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Cmp, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, obj: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 200_000;

impl Lp {
    pub fn new(n: usize) -> Self {
        Self { n, c: vec![0.0; n], rows: Vec::new() }
    }

    pub fn row(&mut self, a: Vec<f64>, cmp: Cmp, b: f64) {
        debug_assert_eq!(a.len(), self.n);
        self.rows.push((a, cmp, b));
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    m: usize,
    cols: usize,
    /// `m` constraint rows then the objective row; the last column is the RHS.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    artificial_from: usize,
    /// Full constraint matrix in standard form (for the final polish).
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Tableau {
    fn build(lp: &Lp) -> Self {
        let m = lp.rows.len();
        let n = lp.n;
        let mut rows: Vec<(Vec<f64>, Cmp, f64)> = lp
            .rows
            .iter()
            .map(|(a, cmp, b)| {
                if *b < 0.0 {
                    let flip = match cmp {
                        Cmp::Le => Cmp::Ge,
                        Cmp::Ge => Cmp::Le,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (a.iter().map(|v| -v).collect(), flip, -b)
                } else {
                    (a.clone(), *cmp, *b)
                }
            })
            .collect();
        let n_slack = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Cmp::Le).count();
        let artificial_from = n + n_slack;
        let cols = artificial_from + n_art;
        let mut t = vec![vec![0.0; cols + 1]; m + 1];
        let mut basis = vec![0; m];
        let mut a_std = vec![vec![0.0; artificial_from]; m];
        let mut b_std = vec![0.0; m];
        let (mut s, mut art) = (n, artificial_from);
        for (i, (a, cmp, b)) in rows.iter_mut().enumerate() {
            t[i][..n].copy_from_slice(a);
            a_std[i][..n].copy_from_slice(a);
            t[i][cols] = *b;
            b_std[i] = *b;
            match cmp {
                Cmp::Le => {
                    t[i][s] = 1.0;
                    a_std[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Cmp::Ge => {
                    t[i][s] = -1.0;
                    a_std[i][s] = -1.0;
                    s += 1;
                    t[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Cmp::Eq => {
                    t[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self { m, cols, t, basis, artificial_from, a: a_std, b: b_std }
    }

    fn set_objective(&mut self, costs: &[f64]) {
        let obj = self.m;
        for j in 0..=self.cols {
            self.t[obj][j] = if j < costs.len() { costs[j] } else { 0.0 };
        }
        for i in 0..self.m {
            let cb = if self.basis[i] < costs.len() { costs[self.basis[i]] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..=self.cols {
                    self.t[obj][j] -= cb * self.t[i][j];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let pv = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= pv;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule iterations over columns `< limit`. Returns false if unbounded.
    fn iterate(&mut self, limit: usize) -> bool {
        let obj = self.m;
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..limit).find(|&j| self.t[obj][j] < -COST_TOL) else {
                return true;
            };
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for i in 0..self.m {
                let a = self.t[i][enter];
                if a > PIVOT_TOL {
                    let ratio = self.t[i][self.cols] / a;
                    let better = match leave {
                        None => true,
                        Some(l) => ratio < best - 1e-15 || (ratio <= best + 1e-15 && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        best = ratio;
                        leave = Some(i);
                    }
                }
            }
            match leave {
                None => return false,
                Some(r) => self.pivot(r, enter),
            }
        }
        tracing::warn!("simplex pivot limit reached");
        true
    }

    fn run(mut self, lp: &Lp) -> LpOutcome {
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if self.cols > self.artificial_from {
            let mut phase1 = vec![0.0; self.cols];
            for v in phase1.iter_mut().skip(self.artificial_from) {
                *v = 1.0;
            }
            self.set_objective(&phase1);
            self.iterate(self.cols);
            if -self.t[self.m][self.cols] > FEAS_TOL * scale {
                return LpOutcome::Infeasible;
            }
            let mut i = 0;
            while i < self.m {
                if self.basis[i] >= self.artificial_from {
                    match (0..self.artificial_from).find(|&j| self.t[i][j].abs() > 1e-9) {
                        Some(j) => {
                            self.pivot(i, j);
                            i += 1;
                        }
                        None => {
                            self.t.remove(i);
                            self.basis.remove(i);
                            self.a.remove(i);
                            self.b.remove(i);
                            self.m -= 1;
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }
        let mut costs = lp.c.clone();
        costs.resize(self.artificial_from, 0.0);
        self.set_objective(&costs);
        if !self.iterate(self.artificial_from) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; self.artificial_from];
        for (i, &bv) in self.basis.iter().enumerate() {
            x[bv] = self.t[i][self.cols];
        }
        self.polish(&mut x);
        x.truncate(lp.n);
        let obj = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { x, obj }
    }

    /// Recomputes basic values from the original columns to remove pivoting drift.
    fn polish(&self, x: &mut [f64]) {
        let m = self.m;
        if m == 0 {
            return;
        }
        let bm = DMatrix::from_fn(m, m, |i, j| self.a[i][self.basis[j]]);
        let rhs = DVector::from_fn(m, |i, _| {
            let mut r = self.b[i];
            for (j, v) in x.iter().enumerate() {
                if !self.basis.contains(&j) && *v != 0.0 {
                    r -= self.a[i][j] * v;
                }
            }
            r
        });
        if let Some(sol) = bm.full_piv_lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite() && *v > -1e-9) {
                for (j, &bv) in self.basis.iter().enumerate() {
                    x[bv] = sol[j].max(0.0);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(lp: &Lp) -> (Vec<f64>, f64) {
        match lp.solve() {
            LpOutcome::Optimal { x, obj } => (x, obj),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = Lp::new(2);
        lp.c = vec![-3.0, -5.0];
        lp.row(vec![1.0, 0.0], Cmp::Le, 4.0);
        lp.row(vec![0.0, 2.0], Cmp::Le, 12.0);
        lp.row(vec![3.0, 2.0], Cmp::Le, 18.0);
        let (x, obj) = opt(&lp);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
        assert!((obj + 36.0).abs() < 1e-12);
    }

    #[test]
    fn equalities_and_ge() {
        // min x + y + z, x + y + z = 1, x − z = 0.2, y ≥ 0.3
        let mut lp = Lp::new(3);
        lp.c = vec![1.0, 2.0, 1.0];
        lp.row(vec![1.0, 1.0, 1.0], Cmp::Eq, 1.0);
        lp.row(vec![1.0, 0.0, -1.0], Cmp::Eq, 0.2);
        lp.row(vec![0.0, 1.0, 0.0], Cmp::Ge, 0.3);
        let (x, obj) = opt(&lp);
        assert!((x[1] - 0.3).abs() < 1e-12);
        assert!((x[0] - 0.45).abs() < 1e-12 && (x[2] - 0.25).abs() < 1e-12);
        assert!((obj - 1.3).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = Lp::new(1);
        lp.row(vec![1.0], Cmp::Le, -1.0);
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
        let mut lp = Lp::new(2);
        lp.c = vec![-1.0, 0.0];
        lp.row(vec![0.0, 1.0], Cmp::Le, 1.0);
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = Lp::new(2);
        lp.c = vec![1.0, 0.0];
        lp.row(vec![1.0, 1.0], Cmp::Eq, 1.0);
        lp.row(vec![2.0, 2.0], Cmp::Eq, 2.0);
        let (x, obj) = opt(&lp);
        assert_eq!(obj, 0.0);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under the largest-coefficient rule.
        let mut lp = Lp::new(4);
        lp.c = vec![-0.75, 150.0, -0.02, 6.0];
        lp.row(vec![0.25, -60.0, -0.04, 9.0], Cmp::Le, 0.0);
        lp.row(vec![0.5, -90.0, -0.02, 3.0], Cmp::Le, 0.0);
        lp.row(vec![0.0, 0.0, 1.0, 0.0], Cmp::Le, 1.0);
        let (_, obj) = opt(&lp);
        assert!((obj + 0.05).abs() < 1e-12);
    }
}
