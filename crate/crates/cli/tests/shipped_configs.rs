use std::fs;
use std::path::Path;

use liftcheck::config::RunConfig;

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn every_shipped_config_loads() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}

#[test]
fn selftest_config_file_matches_builtin_defaults() {
    let file = RunConfig::load(&configs_dir().join("selftest.json")).unwrap();
    assert_eq!(file, RunConfig::selftest());
}
