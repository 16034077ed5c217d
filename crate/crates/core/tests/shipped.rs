//! The profile and configs checked into the repository stay loadable and in
//! sync with the built-in defaults.

use std::path::PathBuf;

use phaseserve::engine::RunConfig;
use phaseserve::profile::{saturation_ratios, ProfileBundle};
use phaseserve::scheduler::Policy;
use phaseserve::workload::Paradigm;
use phaseserve::SimConfig;

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn default_profile_file_matches_builtin() {
    let text = std::fs::read_to_string(repo().join("profiles/default.toml")).unwrap();
    let bundle = ProfileBundle::from_toml_str(&text).unwrap();
    assert_eq!(bundle, ProfileBundle::default_synthetic());
    let (decode, cold) = saturation_ratios(&bundle).unwrap();
    assert!(decode >= 0.9 && cold < 0.7, "decode {decode}, cold {cold}");
}

#[test]
fn every_config_resolves() {
    let mut seen = 0;
    for entry in std::fs::read_dir(repo().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::from_path(&path).unwrap();
            cfg.resolve()
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}

#[test]
fn react_config_is_the_default_run() {
    let cfg = RunConfig::from_path(&repo().join("configs/react_c6.toml")).unwrap();
    let resolved = cfg.resolve().unwrap();
    let builtin = SimConfig::default_for(Paradigm::ReAct, 6, Policy::TpotDriven, 42).unwrap();
    assert_eq!(resolved, builtin);
}
