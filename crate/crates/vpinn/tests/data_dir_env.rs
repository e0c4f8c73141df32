//! The data-directory environment variable resolves relative data paths.
//! Kept in its own integration binary so the env mutation cannot race other
//! tests.

use std::fs;
use vpinn::cli::{resolve_data_path, ProblemKind, RunConfig, DATA_DIR_ENV};

#[test]
fn relative_data_paths_resolve_through_the_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::from("T,rho,cp,k\n");
    for t in (-30..=25).step_by(5) {
        rows.push_str(&format!("{t},1080,3400,0.9\n"));
    }
    fs::write(dir.path().join("props.csv"), rows).unwrap();
    std::env::set_var(DATA_DIR_ENV, dir.path());

    let resolved = resolve_data_path(std::path::Path::new("props.csv"));
    assert_eq!(resolved, dir.path().join("props.csv"));

    let mut cfg = RunConfig::defaults_for(ProblemKind::Coffee);
    cfg.properties_path = Some("props.csv".into());
    cfg.validate().expect("path resolves through the data dir");
    let (problem, _) = cfg.build_problem().expect("problem builds");
    // reference values come from the file, so C(1) = K(1) = 1 still holds
    assert!((problem.capacity.eval(1.0) - 1.0).abs() < 1e-12);

    std::env::remove_var(DATA_DIR_ENV);
    // absolute paths bypass the data dir entirely
    let abs = dir.path().join("props.csv");
    assert_eq!(resolve_data_path(&abs), abs);
}
