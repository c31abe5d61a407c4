#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixturepfn_core::data::TabularDataset;
use mpfn::csvio;

pub fn mpfn_bin() -> &'static str {
    env!("CARGO_BIN_EXE_mpfn")
}

pub fn mock_bin() -> &'static str {
    env!("CARGO_BIN_EXE_mpfn-mock-bridge")
}

/// Runs the CLI with `MPFN_BRIDGE_CMD` cleared.
pub fn mpfn(args: &[&str]) -> Output {
    Command::new(mpfn_bin())
        .args(args)
        .env_remove("MPFN_BRIDGE_CMD")
        .output()
        .expect("spawn mpfn")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn write_csv(dir: &Path, name: &str, ds: &TabularDataset) -> PathBuf {
    let p = dir.join(name);
    csvio::write_matrix_with_labels(&p, &ds.features, &ds.labels).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` except the timing log, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.log" {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}
