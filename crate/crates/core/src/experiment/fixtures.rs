use super::config::*;
use super::ExperimentError;
use crate::process_sim::{BesselTable, DriftId, JumpAtom, LevyParams, ProcessModel, TimeChange, TimeGrid, VolId};

pub const FIXTURE_NAMES: [&str; 6] = ["alma", "brownian", "skew", "levy", "fbm", "inverse_bessel"];

/// Branching 3 every `every` steps starting at step 0, 1 elsewhere.
pub fn spaced_branching(steps: usize, every: usize, b: usize) -> Vec<usize> {
    (0..steps).map(|k| if k % every == 0 { b } else { 1 }).collect()
}

fn approx(chi: f64) -> ApproximationSection {
    ApproximationSection {
        g_p: 1.0,
        chi,
        eps_grid: None,
        rungs: 12,
        f_min: crate::tilting::DEFAULT_F_MIN,
        eta_rule: Default::default(),
        allow_noise: true,
        noise_atoms: 3,
    }
}

fn spaced_tree(steps: usize, every: usize) -> TreeSection {
    TreeSection {
        branching: spaced_branching(steps, every, 3),
        hold_single: true,
        center_increments: false,
        lloyd_seed: 7,
        noise: None,
        node_cap: crate::scenario_tree::DEFAULT_NODE_CAP,
    }
}

fn output(name: &str) -> OutputSection {
    OutputSection { dir: format!("out/{name}").into(), ensemble_csv: false }
}

/// Pinned configs for the named fixtures.
pub fn fixtures(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let grid = |steps| TimeGrid { horizon: 1.0, steps };
    let model = |process, steps, n_paths| ModelSection { process, grid: grid(steps), n_paths, seed: 7 };
    let cfg = match name {
        "alma" => ExperimentConfig {
            model: model(ProcessModel::TerminalUniform { atoms: 101 }, 4, 101),
            tree: TreeSection { branching: vec![1, 1, 1, 101], lloyd_seed: 7, ..spaced_tree(4, 1) },
            sticky: None,
            approximation: Some(approx(0.25)),
            localization: None,
            na2: None,
            output: output(name),
        },
        "brownian" => ExperimentConfig {
            model: model(ProcessModel::Sde { drift: DriftId::Zero, vol: VolId::Identity, x0: vec![0.0] }, 32, 10_000),
            tree: spaced_tree(32, 8),
            sticky: Some(StickySection { kappa: 0.5 }),
            approximation: Some(approx(1.0)),
            localization: None,
            na2: Some(Na2Section { h: 1.0, alpha: 2.0, beta: 1.5, chi: 0.1, scaling: true }),
            output: output(name),
        },
        "skew" => ExperimentConfig {
            model: model(ProcessModel::SkewBm { beta: 0.5 }, 16, 10_000),
            tree: spaced_tree(16, 4),
            sticky: Some(StickySection { kappa: 0.5 }),
            approximation: Some(approx(4.0)),
            localization: None,
            na2: None,
            output: output(name),
        },
        "levy" => ExperimentConfig {
            model: model(
                ProcessModel::Levy {
                    params: LevyParams { drift: 0.5, sigma: 1.0, jumps: vec![JumpAtom { size: -0.5, rate: 1.0 }] },
                },
                16,
                10_000,
            ),
            tree: spaced_tree(16, 4),
            sticky: Some(StickySection { kappa: 0.5 }),
            approximation: Some(approx(4.0)),
            localization: None,
            na2: None,
            output: output(name),
        },
        "fbm" => ExperimentConfig {
            model: model(ProcessModel::Fbm { hurst: 0.3, dim: 1 }, 16, 10_000),
            tree: spaced_tree(16, 4),
            sticky: Some(StickySection { kappa: 0.5 }),
            approximation: Some(approx(4.0)),
            localization: None,
            na2: None,
            output: output(name),
        },
        "inverse_bessel" => ExperimentConfig {
            model: model(
                ProcessModel::StrictLocalMartingale {
                    time_change: TimeChange::Exponential { rate: 1.0 },
                    table: BesselTable { paths: 20_000, points: 128, horizon: 16.0 },
                },
                16,
                10_000,
            ),
            tree: spaced_tree(16, 4),
            sticky: Some(StickySection { kappa: 0.5 }),
            approximation: None,
            localization: None,
            na2: None,
            output: output(name),
        },
        other => {
            return Err(ExperimentError::Config(format!(
                "unknown fixture `{other}`; expected one of {}",
                FIXTURE_NAMES.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_validate_and_round_trip() {
        for name in FIXTURE_NAMES {
            let c = fixtures(name).unwrap();
            assert_eq!(ExperimentConfig::from_json_str(&c.to_json()).unwrap(), c);
            assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml()).unwrap(), c, "{name}");
        }
        assert!(fixtures("nope").is_err());
    }

    #[test]
    fn brownian_is_pinned() {
        let c = fixtures("brownian").unwrap();
        assert_eq!(c.model.seed, 7);
        assert_eq!(c.model.n_paths, 10_000);
        assert_eq!(c.model.grid.steps, 32);
        assert_eq!(c.tree.branching.iter().filter(|b| **b == 3).count(), 4);
    }
}
