use std::path::{Path, PathBuf};
use std::process::Command;

use wc4dvar::burgers::BurgersConfig;

fn wc4dvar(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_wc4dvar")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_schemas(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().get(0), Some("schema"), "{}", path.display());
    r.records().map(|rec| rec.unwrap()[0].to_string()).collect()
}

fn json_schema(path: &Path) -> String {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["schema"].as_str().unwrap_or_else(|| panic!("{} has no schema", path.display())).to_string()
}

#[test]
fn subcommands_write_versioned_outputs() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, serde_json::to_string(&BurgersConfig::small(16, 4, 20, 6)).unwrap()).unwrap();
    let (cfg, out) = (cfg.to_str().unwrap(), dir.to_str().unwrap());

    wc4dvar(&["generate", "--config", cfg, "--seed", "7", "--out", out]);
    wc4dvar(&[
        "run", "--config", cfg, "--seed", "7", "--variant", "SAQ1-M-0", "--variant", "FOQ1-D", "--variant", "SAQ0-M-0",
        "--n-inner", "10", "--max-outer", "3", "--eps-q", "0.01", "--eps-r", "1e-6", "--out", out,
    ]);
    let results = dir.join("results.json");
    wc4dvar(&["cost", "--results", results.to_str().unwrap(), "--p", "1,2,4", "--c-dinv", "0.5,2", "--mode", "fully_mpi,hybrid", "--out", out]);
    wc4dvar(&["map", "--results", results.to_str().unwrap(), "--p", "1,4", "--rho-points", "3", "--out", out]);

    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let schemas = csv_schemas(&path);
                assert!(!schemas.is_empty() && schemas.iter().all(|s| s.starts_with("wc4dvar.")), "{}", path.display());
                seen += 1;
            }
            Some("json") if path != dir.join("config.json") => {
                assert!(json_schema(&path).starts_with("wc4dvar."));
                seen += 1;
            }
            _ => {}
        }
    }
    assert!(seen >= 7, "only {seen} outputs");

    let store = wc4dvar::io::read_results(&results).unwrap();
    assert_eq!(store.outcomes.len(), 3);
    assert!(store.outcomes.iter().all(|o| o.trace.is_some()));
    assert_eq!(store.controls.n_inner, 10);
    let map_rows = csv_schemas(&dir.join("map.csv"));
    assert_eq!(map_rows.len(), 2 * 5 * 3);
}

#[test]
fn invalid_variants_are_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_wc4dvar")).args(["run", "--variant", "STQ1-M-0"]).output().unwrap();
    assert!(!out.status.success());
}
