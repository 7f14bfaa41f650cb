use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::measure_builder::{ApproxOptions, EtaRule, LocalizeOptions, MeasureOptions};
use crate::na2::CostSpec;
use crate::process_sim::{ProcessModel, TimeGrid};
use crate::scenario_tree::{BuildOptions, NoiseSpec, DEFAULT_NODE_CAP};
use crate::tilting::{ConvexG, DEFAULT_F_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub tree: TreeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sticky: Option<StickySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approximation: Option<ApproximationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub na2: Option<Na2Section>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub process: ProcessModel,
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    /// Clusters per step, one entry per grid step.
    pub branching: Vec<usize>,
    #[serde(default)]
    pub hold_single: bool,
    #[serde(default)]
    pub center_increments: bool,
    #[serde(default)]
    pub lloyd_seed: u64,
    /// Noise tensored onto the tree before any construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "default_cap")]
    pub node_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_NODE_CAP
}

impl TreeSection {
    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            seed: self.lloyd_seed,
            center_increments: self.center_increments,
            hold_single: self.hold_single,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct StickySection {
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ApproximationSection {
    /// `g(x) = x^p`
    #[serde(default = "one")]
    pub g_p: f64,
    pub chi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(default = "default_rungs")]
    pub rungs: usize,
    #[serde(default = "default_f_min")]
    pub f_min: f64,
    #[serde(default)]
    pub eta_rule: EtaRule,
    #[serde(default = "yes")]
    pub allow_noise: bool,
    #[serde(default = "three")]
    pub noise_atoms: usize,
}

fn one() -> f64 {
    1.0
}
fn default_rungs() -> usize {
    12
}
fn default_f_min() -> f64 {
    DEFAULT_F_MIN
}
fn yes() -> bool {
    true
}
fn three() -> usize {
    3
}

impl ApproximationSection {
    pub fn g(&self) -> ConvexG {
        ConvexG::Power { p: self.g_p }
    }

    pub fn options(&self, node_cap: usize) -> ApproxOptions {
        ApproxOptions {
            eps_grid: self.eps_grid.clone(),
            rungs: self.rungs,
            measure: MeasureOptions { f_min: self.f_min, eta_rule: self.eta_rule },
            allow_noise: self.allow_noise,
            noise_atoms: self.noise_atoms,
            node_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LocalizationSection {
    pub levels: Vec<f64>,
    pub chi: f64,
}

impl LocalizationSection {
    pub fn options(&self, approx: ApproxOptions) -> LocalizeOptions {
        LocalizeOptions { levels: self.levels.clone(), approx }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Na2Section {
    #[serde(rename = "H")]
    pub h: f64,
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    /// Also tabulate the dual gap across the approximation ε grid.
    #[serde(default)]
    pub scaling: bool,
}

impl Na2Section {
    pub fn cost(&self) -> CostSpec {
        CostSpec { h: self.h, alpha: self.alpha, form: Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Also write the ensemble as CSV next to the binary file.
    #[serde(default)]
    pub ensemble_csv: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), ensemble_csv: false }
    }
}

fn positive(name: &str, v: f64) -> Result<(), ExperimentError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ExperimentError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        let c: Self = toml::from_str(s).map_err(|e| ExperimentError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ExperimentError> {
        let c: Self = serde_json::from_str(s).map_err(|e| ExperimentError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads `.json` as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let s = std::fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&s)
        } else {
            Self::from_toml_str(&s)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let cfg = |e: &dyn std::fmt::Display| ExperimentError::Config(e.to_string());
        let m = &self.model;
        m.grid.validate().map_err(|e| cfg(&e))?;
        if m.n_paths == 0 {
            return Err(ExperimentError::Config("n_paths must be positive".into()));
        }
        let t = &self.tree;
        if t.branching.len() != m.grid.steps {
            return Err(ExperimentError::Config(format!(
                "tree.branching has {} entries for {} grid steps",
                t.branching.len(),
                m.grid.steps
            )));
        }
        if t.branching.contains(&0) {
            return Err(ExperimentError::Config("tree.branching entries must be at least 1".into()));
        }
        if let Some(n) = &t.noise {
            n.validate().map_err(|e| cfg(&e))?;
        }
        if let Some(s) = &self.sticky {
            positive("sticky.kappa", s.kappa)?;
        }
        if let Some(a) = &self.approximation {
            a.g().validate().map_err(|e| cfg(&e))?;
            positive("approximation.chi", a.chi)?;
            positive("approximation.f_min", a.f_min)?;
            if a.f_min >= 1.0 {
                return Err(ExperimentError::Config("approximation.f_min must be below 1".into()));
            }
            if let Some(g) = &a.eps_grid {
                if g.is_empty() || g.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    return Err(ExperimentError::Config("approximation.eps_grid must hold positive values".into()));
                }
            }
            if a.noise_atoms.is_multiple_of(2) {
                return Err(ExperimentError::Config("approximation.noise_atoms must be odd".into()));
            }
        }
        if let Some(l) = &self.localization {
            if self.approximation.is_none() {
                return Err(ExperimentError::Config("localization needs an approximation section".into()));
            }
            positive("localization.chi", l.chi)?;
            if l.levels.is_empty() || l.levels.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ExperimentError::Config("localization.levels must be nonempty and increasing".into()));
            }
        }
        if let Some(n) = &self.na2 {
            if self.approximation.is_none() {
                return Err(ExperimentError::Config("na2 needs an approximation section".into()));
            }
            n.cost().validate().map_err(|e| cfg(&e))?;
            crate::na2::exponents(n.alpha, n.beta).map_err(|e| cfg(&e))?;
            positive("na2.chi", n.chi)?;
        }
        Ok(())
    }
}
