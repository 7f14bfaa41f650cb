//! Sticky processes, finite scenario trees and equivalent martingale measures.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`process_sim`] samples path ensembles of sticky processes (Lévy,
//!    fractional Brownian motion, diffusions, skew Brownian motion, inverse
//!    Bessel strict local martingales).
//! 2. [`scenario_tree`] compresses an ensemble into a finite filtered
//!    probability space and tensors it with independent bounded noise.
//! 3. [`stickiness`] checks the small-ball property exactly on trees and
//!    statistically on ensembles.
//! 4. [`tilting`] reweights finite conditional increment laws so that they
//!    have zero mean and small moments.
//! 5. [`measure_builder`] stitches the tilts along ε-increment stopping times
//!    into a measure `Q ~ P`, closes the martingale `S̃ = E_Q[S_T | F_t]` and
//!    verifies the approximation bounds, optionally after localization.
//! 6. [`na2`] evaluates the dual no-arbitrage certificate for superlinear
//!    trading costs.
//!
//! [`experiment`] ties the stages together behind a declarative config.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod measure_builder;
pub mod na2;
pub mod numeric;
pub mod process_sim;
pub mod scenario_tree;
pub mod stickiness;
pub mod tilting;

pub use measure_builder::{
    ApproximationReport, Coordinate, MartingaleOverlay, MeasureChange, StoppingSchedule,
};
pub use process_sim::{PathEnsemble, TimeGrid};
pub use scenario_tree::ScenarioTree;
pub use tilting::{AtomicLaw, MomentFunction, TiltWeights};

use thiserror::Error;

/// Top-level error for pipeline runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("simulation: {0}")]
    Sim(#[from] process_sim::SimError),
    #[error("tree: {0}")]
    Tree(#[from] scenario_tree::TreeError),
    #[error("tilt: {0}")]
    Tilt(#[from] tilting::TiltError),
    #[error("measure: {0}")]
    Measure(#[from] measure_builder::MeasureError),
    #[error("na2: {0}")]
    Na2(#[from] na2::Na2Error),
    #[error("experiment: {0}")]
    Experiment(#[from] experiment::ExperimentError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
