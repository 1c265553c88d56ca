#![allow(dead_code)]

use std::path::PathBuf;

pub fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn schema(name: &str) -> PathBuf {
    workspace().join("schemas").join(format!("{name}.toml"))
}

pub fn data_dir() -> PathBuf {
    std::env::var_os("DML_S2R_DATA_DIR").map_or_else(|| workspace().join("data"), PathBuf::from)
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("dml-s2r").chain(args.iter().copied());
    let code = dml_s2r::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
