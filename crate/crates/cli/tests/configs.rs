//! Every shipped config parses and validates.

use std::path::PathBuf;

use thermoprop::experiment::{
    read_config, BackflowScanConfig, CompareConfig, ExperimentConfig, OracleCheckConfig,
};

fn configs() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_validate() {
    let all = configs();
    assert!(all.len() >= 7);
    for p in all {
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        if name.starts_with("backflow") {
            read_config::<BackflowScanConfig>(&p).unwrap();
        } else if name.starts_with("oracle") {
            read_config::<OracleCheckConfig>(&p).unwrap();
        } else if name.contains("compare") {
            read_config::<CompareConfig>(&p).unwrap().resolved().unwrap();
        } else {
            read_config::<ExperimentConfig>(&p).unwrap().resolved().unwrap();
        }
    }
}
