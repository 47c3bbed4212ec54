#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

/// A configuration small enough for every subcommand to finish in seconds.
pub const TINY: &str = r#"
alpha = 0.4
n_nodes = 40
sparsity = 0.8
washout = 200
train_len = 2000
test_len = 600
seg_len = 100

[sweep]
alphas = [0.3, 0.7]
repeats = 2

[estimator]
n_nodes = 40
sparsity = 0.8
grid_step = 0.25
segment_len = 1500
test_len = 800

[interp]
n_nodes = 40
spacings = [0.0, 0.1]
queries = [0.4, 0.45, 0.5]
repeats = 2
"#;

pub const SUBCOMMANDS: [&str; 5] = ["generate", "separate", "sweep", "estimate-alpha", "interp-study"];

pub fn chaosep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaosep"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// Name → bytes of every CSV in `dir`.
pub fn csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

/// Runs `sub` with the given config into `out`, panicking on failure.
pub fn run_ok(sub: &str, config: &str, out: &Path, jobs: &str) {
    let o = chaosep(&[sub, "--config", config, "--out", out.to_str().unwrap(), "--seed", "7", "--jobs", jobs]);
    assert!(
        o.status.success(),
        "{sub} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}
