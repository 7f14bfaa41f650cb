use std::fs;

use sticky_core::experiment::{fixtures, run, ExperimentConfig, ExperimentError, FIXTURE_NAMES};

fn run_in(name: &str, dir: &std::path::Path) -> sticky_core::experiment::Manifest {
    let mut cfg = fixtures(name).unwrap();
    cfg.output.dir = dir.to_path_buf();
    run(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn every_fixture_runs() {
    for name in FIXTURE_NAMES {
        let tmp = tempfile::tempdir().unwrap();
        let m = run_in(name, tmp.path());
        eprintln!("{name}: eps {:?} achieved {:?} bound {:?} sticky {:?} violations {:?}", m.eps, m.achieved, m.bound, m.sticky, m.violations);
        assert!(m.violations.is_empty(), "{name}: {:?}", m.violations);
        for f in &m.files {
            assert!(tmp.path().join(&f.name).exists());
        }
        assert!(tmp.path().join("manifest.json").exists());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_in("alma", a.path());
    let mb = run_in("alma", b.path());
    let strip = |m: &sticky_core::experiment::Manifest| {
        m.files.iter().filter(|f| f.name != "config.json").map(|f| (f.name.clone(), f.sha256.clone())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&ma), strip(&mb));
    let c = tempfile::tempdir().unwrap();
    let mut cfg = fixtures("alma").unwrap();
    cfg.output.dir = c.path().to_path_buf();
    run(&cfg).unwrap();
    let again = fs::read(c.path().join("manifest.json")).unwrap();
    run(&cfg).unwrap();
    assert_eq!(again, fs::read(c.path().join("manifest.json")).unwrap());
}

#[test]
fn unknown_keys_are_config_errors() {
    let mut v: serde_json::Value = serde_json::from_str(&fixtures("alma").unwrap().to_json()).unwrap();
    v["tree"]["bogus"] = 1.into();
    let e = ExperimentConfig::from_json_str(&v.to_string()).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    let toml = fixtures("brownian").unwrap().to_toml().replace("[model]", "[model]\nextra = 3");
    assert_eq!(ExperimentConfig::from_toml_str(&toml).unwrap_err().exit_code(), 2);
    assert!(matches!(fixtures("nope"), Err(ExperimentError::Config(_))));
}

#[test]
fn infeasible_target_maps_to_geometry_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fixtures("brownian").unwrap();
    cfg.output.dir = tmp.path().to_path_buf();
    cfg.na2 = None;
    cfg.approximation.as_mut().unwrap().chi = 1e-6;
    assert_eq!(run(&cfg).unwrap_err().exit_code(), 3);
}
