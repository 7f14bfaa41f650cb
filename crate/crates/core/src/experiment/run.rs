use std::fs;
use std::io::Write;
use std::path::Path;

use schemars::{schema_for, JsonSchema, Schema};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::*;
use super::ExperimentError;
use crate::measure_builder::{
    approximate, eps_grid, localize_and_build, path_deviation, Approximation, ApproximationReport, Attempt, LevelRow, Localization, MartingaleOverlay, MeasureChange,
    StoppingSchedule,
};
use crate::na2::{certify, scaling_law, Na2Certificate, ScalingTable};
use crate::numeric::derive_seed;
use crate::process_sim::{
    compose, constant_ensemble, io as sim_io, simulate_fbm, simulate_levy, simulate_sde, simulate_skew_bm,
    simulate_strict_local_martingale, terminal_uniform_ensemble, PathEnsemble, ProcessModel, TimeGrid,
};
use crate::scenario_tree::{build_tree_with, io as tree_io, product_tree, NoiseSpec, Reduction, ScenarioTree};
use crate::stickiness::{check_sticky_tree, estimate_smallball, Bins, StickyReport};

const INVARIANT_TOL: f64 = 1e-10;
const SMALLBALL_BINS: usize = 8;

fn sim(process: &ProcessModel, grid: TimeGrid, n: usize, seed: u64) -> Result<PathEnsemble, ExperimentError> {
    let r = match process {
        ProcessModel::Constant { value } => constant_ensemble(value, grid, n),
        ProcessModel::Levy { params } => simulate_levy(params, grid, n, seed),
        ProcessModel::Fbm { hurst, dim } => simulate_fbm(*hurst, *dim, grid, n, seed),
        ProcessModel::Sde { drift, vol, x0 } => simulate_sde(*drift, *vol, x0, grid, n, seed),
        ProcessModel::SkewBm { beta } => simulate_skew_bm(*beta, grid, n, seed),
        ProcessModel::StrictLocalMartingale { time_change, table } => {
            simulate_strict_local_martingale(time_change, table, grid, n, seed)
        }
        ProcessModel::TerminalUniform { atoms } => terminal_uniform_ensemble(*atoms, grid),
        ProcessModel::Composed { f, x, l } => {
            let xe = sim(x, grid, n, derive_seed(seed, 0))?;
            let le = sim(l, grid, n, derive_seed(seed, 1))?;
            compose(&xe, &le, *f)
        }
    };
    r.map_err(|e| match e {
        crate::process_sim::SimError::Param(_) => ExperimentError::Config(e.to_string()),
        other => ExperimentError::stage("simulate", other),
    })
}

/// Samples the configured process.
pub fn simulate(model: &ModelSection) -> Result<PathEnsemble, ExperimentError> {
    sim(&model.process, model.grid, model.n_paths, model.seed)
}

/// Tree built from the ensemble, tensored with the configured noise if any.
pub fn build_stage(tree: &TreeSection, ens: &PathEnsemble) -> Result<(ScenarioTree, Vec<Reduction>), ExperimentError> {
    let b = build_tree_with(ens, &tree.branching, &tree.build_options()).map_err(|e| ExperimentError::stage("tree", e))?;
    let t = match &tree.noise {
        Some(n) => product_tree(&b.tree, n, tree.node_cap).map_err(|e| ExperimentError::stage("tree", e))?,
        None => b.tree,
    };
    Ok((t, b.reductions))
}

pub fn sticky_stage(tree: &ScenarioTree, s: &StickySection) -> StickyReport {
    check_sticky_tree(tree, s.kappa)
}

pub fn approximate_stage(
    tree: &ScenarioTree,
    a: &ApproximationSection,
    node_cap: usize,
) -> Result<Approximation, ExperimentError> {
    approximate(tree, &a.g(), a.chi, &a.options(node_cap)).map_err(|e| ExperimentError::measure("approximate", e))
}

pub fn localize_stage(
    tree: &ScenarioTree,
    a: &ApproximationSection,
    l: &LocalizationSection,
    node_cap: usize,
) -> Result<Localization, ExperimentError> {
    localize_and_build(tree, &a.g(), l.chi, &l.options(a.options(node_cap)))
        .map_err(|e| ExperimentError::measure("localize", e))
}

/// Certificate for an approximation, plus the scaling table when requested.
pub fn certify_stage(
    tree: &ScenarioTree,
    approx: &Approximation,
    a: &ApproximationSection,
    n: &Na2Section,
    node_cap: usize,
) -> Result<(Na2Certificate, Option<ScalingTable>), ExperimentError> {
    let cost = n.cost();
    let cert = certify(approx.tree(tree), &approx.measure, &approx.overlay, &cost, n.beta, n.chi)
        .map_err(ExperimentError::na2)?;
    let table = if n.scaling {
        let grid = a.eps_grid.clone().unwrap_or_else(|| eps_grid(tree, a.rungs));
        Some(scaling_law(tree, &a.g(), &cost, n.beta, &grid, &a.options(node_cap)).map_err(ExperimentError::na2)?)
    } else {
        None
    };
    Ok((cert, table))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
    pub tree_nodes: usize,
    pub tree_leaves: usize,
    pub sticky: Option<bool>,
    pub eps: Option<f64>,
    pub achieved: Option<f64>,
    pub bound: Option<f64>,
    pub localization_lambda: Option<f64>,
    pub localization_tv: Option<f64>,
    pub dual_gap: Option<f64>,
    pub na2_pass: Option<bool>,
    /// Failed invariant checks; empty on a clean run.
    pub violations: Vec<String>,
}

impl Manifest {
    /// Bound violation error when any invariant check failed.
    pub fn check(&self) -> Result<(), ExperimentError> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::BoundViolation(self.violations.join("; ")))
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<FileEntry>,
}

impl Out<'_> {
    fn bytes(&mut self, name: &str, data: Vec<u8>) -> Result<(), ExperimentError> {
        fs::write(self.dir.join(name), &data)?;
        self.files.push(FileEntry { name: name.to_string(), bytes: data.len() as u64, sha256: sha256_hex(&data) });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ExperimentError> {
        let mut data = serde_json::to_vec_pretty(value).map_err(|e| ExperimentError::stage("output", e))?;
        data.push(b'\n');
        self.bytes(name, data)
    }
}

#[derive(Serialize, JsonSchema)]
struct TreeSummary<'a> {
    nodes: usize,
    leaves: usize,
    reductions: &'a [Reduction],
}

#[derive(Serialize, JsonSchema)]
struct MeasureFile<'a> {
    schedule: Option<&'a StoppingSchedule>,
    measure: &'a MeasureChange,
    overlay: &'a MartingaleOverlay,
}

#[derive(Serialize, JsonSchema)]
struct ApproximationFile<'a> {
    report: &'a ApproximationReport,
    noise: Option<&'a NoiseSpec>,
    attempts: &'a [Attempt],
}

#[derive(Serialize, JsonSchema)]
struct LocalizationFile<'a> {
    level_index: usize,
    lambda: f64,
    tv: f64,
    report: &'a ApproximationReport,
    table: &'a [LevelRow],
}

/// Schema of every JSON file a run can emit, keyed by file name.
pub fn schemas() -> Vec<(&'static str, Schema)> {
    vec![
        ("config.json", schema_for!(ExperimentConfig)),
        ("tree.json", schema_for!(ScenarioTree)),
        ("noise_tree.json", schema_for!(ScenarioTree)),
        ("tree_summary.json", schema_for!(TreeSummary<'static>)),
        ("sticky.json", schema_for!(StickyReport)),
        ("approximation.json", schema_for!(ApproximationFile<'static>)),
        ("measure.json", schema_for!(MeasureFile<'static>)),
        ("localization.json", schema_for!(LocalizationFile<'static>)),
        ("na2.json", schema_for!(Na2Certificate)),
        ("scaling.json", schema_for!(ScalingTable)),
        ("manifest.json", schema_for!(Manifest)),
    ]
}

fn deviation_csv(tree: &ScenarioTree, measure: &MeasureChange, overlay: &MartingaleOverlay) -> Result<Vec<u8>, ExperimentError> {
    let dev = path_deviation(tree, overlay);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| ExperimentError::stage("output", e);
    w.write_record(["leaf", "p", "q", "log_density", "sup_dev"]).map_err(io)?;
    for (i, &leaf) in measure.leaves.iter().enumerate() {
        w.write_record([
            leaf.to_string(),
            measure.p_leaf[i].to_string(),
            measure.q_leaf[i].to_string(),
            measure.log_density[i].to_string(),
            dev[leaf].to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| ExperimentError::stage("output", e.to_string()))
}

fn audit(approx: &Approximation, violations: &mut Vec<String>) {
    let r = &approx.report;
    if !r.bound_ok {
        violations.push(format!("achieved {} exceeds bound {}", r.achieved, r.bound));
    }
    if !r.budget_ok {
        violations.push(format!("budget {:?} is not below eps {}", r.budget, r.eps));
    }
    if (r.total_q - 1.0).abs() > INVARIANT_TOL {
        violations.push(format!("Q has total mass {}", r.total_q));
    }
    if r.min_q <= 0.0 {
        violations.push(format!("Q has a leaf of mass {}", r.min_q));
    }
    if r.martingale_residual > INVARIANT_TOL {
        violations.push(format!("martingale residual {}", r.martingale_residual));
    }
    if r.root_pin > INVARIANT_TOL {
        violations.push(format!("root value off by {}", r.root_pin));
    }
}

/// Runs every configured stage, writes the outputs into `cfg.output.dir` and
/// returns the manifest. Reruns of the same config are byte-identical.
pub fn run(cfg: &ExperimentConfig) -> Result<Manifest, ExperimentError> {
    cfg.validate()?;
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir)?;
    let mut out = Out { dir, files: Vec::new() };
    let config_json = cfg.to_json();
    let config_sha256 = sha256_hex(config_json.as_bytes());
    out.bytes("config.json", format!("{config_json}\n").into_bytes())?;

    let ens = simulate(&cfg.model)?;
    tracing::info!(paths = ens.n_paths, steps = ens.grid.steps, "simulated");
    let mut buf = Vec::new();
    sim_io::write_binary(&ens, &mut buf).map_err(|e| ExperimentError::stage("output", e))?;
    out.bytes("ensemble.bin", buf)?;
    if cfg.output.ensemble_csv {
        let mut buf = Vec::new();
        sim_io::write_csv(&ens, &mut buf).map_err(|e| ExperimentError::stage("output", e))?;
        out.bytes("ensemble.csv", buf)?;
    }

    let (tree, reductions) = build_stage(&cfg.tree, &ens)?;
    let leaves = tree.leaves().len();
    tracing::info!(nodes = tree.len(), leaves, "tree built");
    out.json("tree.json", &tree)?;
    let mut buf = Vec::new();
    tree_io::write_nodes_csv(&tree, &mut buf).map_err(|e| ExperimentError::stage("output", e))?;
    out.bytes("tree_nodes.csv", buf)?;
    out.json("tree_summary.json", &TreeSummary { nodes: tree.len(), leaves, reductions: &reductions })?;

    let mut m = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256,
        files: Vec::new(),
        tree_nodes: tree.len(),
        tree_leaves: leaves,
        sticky: None,
        eps: None,
        achieved: None,
        bound: None,
        localization_lambda: None,
        localization_tv: None,
        dual_gap: None,
        na2_pass: None,
        violations: Vec::new(),
    };

    if let Some(s) = &cfg.sticky {
        let rep = sticky_stage(&tree, s);
        m.sticky = Some(rep.sticky);
        out.json("sticky.json", &rep)?;
        let table = estimate_smallball(&ens, cfg.model.grid.steps / 2, s.kappa, &Bins::Uniform(SMALLBALL_BINS));
        let mut buf = Vec::new();
        table.write_csv(&mut buf).map_err(|e| ExperimentError::stage("output", e))?;
        out.bytes("smallball.csv", buf)?;
    }

    let cap = cfg.tree.node_cap;
    if let Some(a) = &cfg.approximation {
        let approx = approximate_stage(&tree, a, cap)?;
        tracing::info!(eps = approx.report.eps, achieved = approx.report.achieved, "approximated");
        audit(&approx, &mut m.violations);
        m.eps = Some(approx.report.eps);
        m.achieved = Some(approx.report.achieved);
        m.bound = Some(approx.report.bound);
        let t = approx.tree(&tree);
        out.json("approximation.json", &ApproximationFile { report: &approx.report, noise: approx.noise.as_ref(), attempts: &approx.attempts })?;
        if let Some(nt) = &approx.noise_tree {
            out.json("noise_tree.json", nt)?;
        }
        out.json("measure.json", &MeasureFile { schedule: approx.schedule.as_ref(), measure: &approx.measure, overlay: &approx.overlay })?;
        out.bytes("deviation.csv", deviation_csv(t, &approx.measure, &approx.overlay)?)?;

        if let Some(l) = &cfg.localization {
            let loc = localize_stage(&tree, a, l, cap)?;
            m.localization_lambda = Some(loc.lambda);
            m.localization_tv = Some(loc.tv);
            out.json("localization.json", &LocalizationFile {
                level_index: loc.level_index,
                lambda: loc.lambda,
                tv: loc.tv,
                report: &loc.report,
                table: &loc.table,
            })?;
        }

        if let Some(n) = &cfg.na2 {
            let (cert, table) = certify_stage(&tree, &approx, a, n, cap)?;
            if !cert.pass {
                m.violations.push(format!("dual gap {} is not below chi {}", cert.dual_gap, cert.chi));
            }
            m.dual_gap = Some(cert.dual_gap);
            m.na2_pass = Some(cert.pass);
            out.json("na2.json", &cert)?;
            if let Some(t) = table {
                let mut buf = Vec::new();
                t.write_csv(&mut buf).map_err(ExperimentError::na2)?;
                out.bytes("scaling.csv", buf)?;
                out.json("scaling.json", &t)?;
            }
        }
    }

    m.files = out.files;
    let mut data = serde_json::to_vec_pretty(&m).map_err(|e| ExperimentError::stage("output", e))?;
    data.push(b'\n');
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    f.write_all(&data)?;
    Ok(m)
}
