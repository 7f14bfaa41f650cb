//! Declarative experiment configs and the end-to-end runner.

mod config;
mod fixtures;
mod run;

pub use config::{
    ApproximationSection, ExperimentConfig, LocalizationSection, ModelSection, Na2Section, OutputSection,
    StickySection, TreeSection,
};
pub use fixtures::{fixtures, spaced_branching, FIXTURE_NAMES};
pub use run::{
    approximate_stage, build_stage, certify_stage, localize_stage, run, simulate, schemas, sticky_stage, FileEntry,
    Manifest,
};

use thiserror::Error;

use crate::measure_builder::MeasureError;
use crate::na2::Na2Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Geometry { stage: &'static str, message: String },
    #[error("bound violation: {0}")]
    BoundViolation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Process exit code: 2 config, 3 geometry or infeasibility, 4 bound violation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Geometry { .. } => 3,
            ExperimentError::BoundViolation(_) => 4,
            ExperimentError::Stage { .. } | ExperimentError::Io(_) => 1,
        }
    }

    pub(crate) fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        ExperimentError::Stage { stage, message: e.to_string() }
    }

    pub(crate) fn measure(stage: &'static str, e: MeasureError) -> Self {
        let message = e.to_string();
        match e {
            MeasureError::GeometryViolation { .. }
            | MeasureError::InfeasibleTilt { .. }
            | MeasureError::ExhaustedGrid { .. }
            | MeasureError::PersistentGeometryViolation { .. }
            | MeasureError::NotLocalMartingale { .. }
            | MeasureError::NoAdmissibleLevel { .. } => ExperimentError::Geometry { stage, message },
            MeasureError::Param(_) => ExperimentError::Config(message),
            _ => ExperimentError::Stage { stage, message },
        }
    }

    pub(crate) fn na2(e: Na2Error) -> Self {
        match e {
            Na2Error::Measure(m) => Self::measure("na2", m),
            Na2Error::Cost(_) | Na2Error::Beta { .. } => ExperimentError::Config(e.to_string()),
            other => Self::stage("na2", other),
        }
    }
}
