//! Strictly positive reweighting of finite increment laws.
//!
//! Given atoms `y_i` with probabilities `p_i`, a tilt is a vector `f > 0` with
//! `Σ f_i p_i = 1`, `Σ f_i p_i y_i = 0`, `Σ f_i p_i w(y_i) < η` and
//! `Σ_{|y_i| ≥ η} f_i p_i < η`.

mod geometry;
pub(crate) mod lp;
mod solve;

pub use geometry::{support_geometry, SupportGeometry};
pub use solve::{solve_tilt, tilt_or_identity, DEFAULT_F_MIN};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{norm, KahanSum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TiltError {
    #[error("0 is not in the relative interior of the conditional support ({reason}); tensor independent noise and retry")]
    GeometryViolation { reason: String },
    #[error("no tilt exists at eta = {eta}; the smallest feasible eta is about {min_feasible_eta}")]
    InfeasibleTilt { eta: f64, min_feasible_eta: f64 },
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Finite law with distinct atoms and positive probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AtomicLaw {
    pub atoms: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl AtomicLaw {
    pub fn new(atoms: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self, TiltError> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(TiltError::InvalidLaw(format!("{} atoms, {} probabilities", atoms.len(), probs.len())));
        }
        let d = atoms[0].len();
        if d == 0 || atoms.iter().any(|a| a.len() != d || a.iter().any(|v| !v.is_finite())) {
            return Err(TiltError::InvalidLaw("atoms must be finite with a common positive dimension".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(TiltError::InvalidLaw(format!("probability {p} is not positive")));
        }
        let total = probs.iter().copied().collect::<KahanSum>().value();
        if (total - 1.0).abs() > 1e-12 {
            return Err(TiltError::InvalidLaw(format!("probabilities sum to {total}")));
        }
        let mut sorted: Vec<&Vec<f64>> = atoms.iter().collect();
        sorted.sort_by(|a, b| {
            a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(TiltError::InvalidLaw("atoms must be distinct".into()));
        }
        Ok(Self { atoms, probs })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(points: &[(f64, f64)]) -> Result<Self, TiltError> {
        Self::new(points.iter().map(|(y, _)| vec![*y]).collect(), points.iter().map(|(_, p)| *p).collect())
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.atoms.iter().zip(&self.probs).map(|(a, p)| a[j] * p).collect::<KahanSum>().value())
            .collect()
    }

    /// Whether the law is `δ_0` up to `tol` in norm.
    pub fn is_dirac_zero(&self, tol: f64) -> bool {
        self.atoms.len() == 1 && norm(&self.atoms[0]) <= tol
    }
}

/// Moment function `w` with `w(0) = 0` and `w(x) ≥ |x|`, evaluated on `|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum MomentFunction {
    /// `w(x) = |x|`
    Abs,
    /// `w(x) = (inner·|x|)^{2p} + |x|`, i.e. `g²(inner·|x|) + |x|` for `g(x) = x^p`.
    GCombo { p: f64, inner: f64 },
    /// `w(x) = 4^{2δ}|x|^{2δ} + 2|x|`
    Na2 { delta: f64 },
}

impl MomentFunction {
    /// `w` for the power function `g`; `inner` is 2 on bare trees and 4 with noise.
    pub fn for_g(g: &ConvexG, noise: bool) -> Self {
        match g {
            ConvexG::Power { p } => MomentFunction::GCombo { p: *p, inner: if noise { 4.0 } else { 2.0 } },
        }
    }

    pub fn eval_norm(&self, r: f64) -> f64 {
        match self {
            MomentFunction::Abs => r,
            MomentFunction::GCombo { p, inner } => (inner * r).powf(2.0 * p) + r,
            MomentFunction::Na2 { delta } => 4f64.powf(2.0 * delta) * r.powf(2.0 * delta) + 2.0 * r,
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.eval_norm(norm(y))
    }

    pub fn validate(&self) -> Result<(), TiltError> {
        let ok = match self {
            MomentFunction::Abs => true,
            MomentFunction::GCombo { p, inner } => p.is_finite() && *p > 0.0 && inner.is_finite() && *inner > 0.0,
            MomentFunction::Na2 { delta } => delta.is_finite() && *delta > 0.0,
        };
        if !ok {
            return Err(TiltError::Param(format!("invalid moment function {self:?}")));
        }
        if self.eval_norm(0.0) != 0.0 {
            return Err(TiltError::Param("w(0) must be 0".into()));
        }
        for i in 0..=200 {
            let r = i as f64 * 0.05;
            if self.eval_norm(r) < r {
                return Err(TiltError::Param(format!("w({r}) < {r}")));
            }
        }
        Ok(())
    }
}

/// Convex loss `g` applied to the sup deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexG {
    /// `g(x) = x^p`, `p ≥ 1`
    Power { p: f64 },
}

impl ConvexG {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ConvexG::Power { p } => x.powf(*p),
        }
    }

    pub fn validate(&self) -> Result<(), TiltError> {
        match self {
            ConvexG::Power { p } if p.is_finite() && *p >= 1.0 => Ok(()),
            ConvexG::Power { p } => Err(TiltError::Param(format!("g(x) = x^p needs p ≥ 1, got {p}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Achieved {
    pub mass: f64,
    pub mean: Vec<f64>,
    pub w_moment: f64,
    pub tail_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TiltMethod {
    Identity,
    TwoStage,
    ExactLp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TiltWeights {
    pub f: Vec<f64>,
    pub achieved: Achieved,
    pub eta: f64,
    pub f_min: f64,
    /// Some weight exceeds `1/f_min`.
    pub cap_hit: bool,
    pub method: TiltMethod,
}

impl TiltWeights {
    /// Whether every constraint holds at the stored tolerances.
    pub fn satisfied(&self) -> bool {
        let a = &self.achieved;
        (a.mass - 1.0).abs() <= 1e-10
            && a.mean.iter().all(|m| m.abs() <= 1e-10)
            && a.w_moment < self.eta
            && a.tail_mass < self.eta
            && self.f.iter().all(|f| *f >= self.f_min)
    }
}

/// Mass, mean, w-moment and tail mass of `f` against `law`.
pub fn achieved(law: &AtomicLaw, f: &[f64], eta: f64, w: &MomentFunction) -> Achieved {
    let mut mass = KahanSum::new();
    let mut wm = KahanSum::new();
    let mut tail = KahanSum::new();
    let mut mean = vec![KahanSum::new(); law.dim()];
    for ((y, p), fi) in law.atoms.iter().zip(&law.probs).zip(f) {
        let q = fi * p;
        mass.add(q);
        let r = norm(y);
        wm.add(q * w.eval_norm(r));
        if r >= eta {
            tail.add(q);
        }
        for (m, v) in mean.iter_mut().zip(y) {
            m.add(q * v);
        }
    }
    Achieved {
        mass: mass.value(),
        mean: mean.iter().map(|m| m.value()).collect(),
        w_moment: wm.value(),
        tail_mass: tail.value(),
    }
}
