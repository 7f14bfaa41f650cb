//! Equivalent martingale measures on scenario trees.
//!
//! Pipeline: [`stopping_schedule`] → [`build_measure`] → [`close_martingale`]
//! → [`verify_bound`]. [`approximate`] and [`localize_and_build`] run it end
//! to end.

mod approximate;
mod bound;
mod closure;
mod localize;
mod measure;
mod schedule;

pub use approximate::{approximate, eps_grid, ApproxOptions, Approximation, Attempt};
pub use bound::{lp_moment_report, path_deviation, verify_bound, ApproximationReport, LpMomentReport, StageAudit};
pub use closure::{close_martingale, martingale_residual, q_node_masses, MartingaleOverlay};
pub use localize::{localize_and_build, total_variation, LevelRow, Localization, LocalizeOptions};
pub use measure::{build_measure, EtaRule, MeasureChange, MeasureOptions, NodeTilt};
pub use schedule::{stopping_schedule, StoppingSchedule, Transition};

pub use crate::scenario_tree::Coordinate;

use thiserror::Error;

use crate::scenario_tree::TreeError;
use crate::tilting::TiltError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("stage {stage}, node {node}: 0 is not in the relative interior of the conditional support ({reason}); tensor independent noise and retry")]
    GeometryViolation { stage: usize, node: usize, reason: String },
    #[error("stage {stage}, node {node}: no tilt at eta = {eta}, smallest feasible eta is about {min_feasible_eta}")]
    InfeasibleTilt { stage: usize, node: usize, eta: f64, min_feasible_eta: f64 },
    #[error("no eps on the grid gives a bound below chi = {chi}; best bound {best_bound}")]
    ExhaustedGrid { chi: f64, best_bound: f64 },
    #[error("geometry violation persists after adding noise at eps = {eps}: {reason}")]
    PersistentGeometryViolation { eps: f64, reason: String },
    #[error("S is not a P-martingale before the hitting time: node {node}, residual {residual}")]
    NotLocalMartingale { node: usize, residual: f64 },
    #[error("no localization level gives total variation below chi = {chi}")]
    NoAdmissibleLevel { chi: f64, table: Vec<LevelRow> },
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("tilt: {0}")]
    Tilt(TiltError),
    #[error("invalid parameter: {0}")]
    Param(String),
}

impl MeasureError {
    pub(crate) fn at(stage: usize, node: usize, e: TiltError) -> Self {
        match e {
            TiltError::GeometryViolation { reason } => MeasureError::GeometryViolation { stage, node, reason },
            TiltError::InfeasibleTilt { eta, min_feasible_eta } => {
                MeasureError::InfeasibleTilt { stage, node, eta, min_feasible_eta }
            }
            other => MeasureError::Tilt(other),
        }
    }

    pub fn is_geometry(&self) -> bool {
        matches!(self, MeasureError::GeometryViolation { .. } | MeasureError::PersistentGeometryViolation { .. })
    }
}
