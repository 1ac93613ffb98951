//! The checked-in example config stays in sync with the toy constructor.

use mfvit_pipeline::config::ExperimentConfig;
use std::path::PathBuf;

#[test]
fn example_config_matches_toy_constructor() {
    let want = ExperimentConfig::toy(PathBuf::from("runs/toy"));
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/toy.json");
    let got = ExperimentConfig::load(std::path::Path::new(path)).unwrap();
    assert_eq!(
        got, want,
        "configs/toy.json drifted from ExperimentConfig::toy"
    );
}
