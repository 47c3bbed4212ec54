mod support;

use std::fs;

use support::*;

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "alpha = 0.3\nn_samples = 10\n");
    let out = dir.path().join("out");
    run_ok("generate", &cfg, &out, "1");
    for name in ["s1.csv", "s2.csv", "mixed.csv", "trajectory1.csv", "trajectory2.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(text.lines().count(), 11, "{name}");
    }
    let header = fs::read_to_string(out.join("mixed.csv")).unwrap();
    assert_eq!(header.lines().next(), Some("t,value"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["alpha"], 0.3);
    assert_eq!(manifest["n_samples"], 10);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok("separate", &cfg, &a, "1");
    run_ok("separate", &cfg, &b, "1");
    let (ca, cb) = (csvs(&a), csvs(&b));
    assert_eq!(ca.len(), 3);
    assert_eq!(ca, cb);
}

#[test]
fn sweep_output_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok("sweep", &cfg, &a, "1");
    run_ok("sweep", &cfg, &b, "2");
    let ca = csvs(&a);
    assert!(ca.contains_key("fig2.csv") && ca.contains_key("fig2_runs.csv"));
    assert_eq!(ca, csvs(&b));
    let runs = String::from_utf8(ca["fig2_runs.csv"].clone()).unwrap();
    // 2 α × 2 seeds × 2 estimators.
    assert_eq!(runs.lines().count(), 9);
}

#[test]
fn missing_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_nodes = 40\n");
    let out = dir.path().join("out");
    let o = chaosep(&["separate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let msg = stderr(&o);
    assert!(msg.contains("alpha"), "{msg}");
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "alpha = 0.5\nspectral_raduis = 0.9\n");
    let o = chaosep(&["generate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("spectral_raduis"), "{}", stderr(&o));
}

#[test]
fn out_of_range_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "alpha = 1.5\n");
    let o = chaosep(&["generate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let o = chaosep(&["generate", "--seed", "1", "--jobs", "0"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unwritable_output_is_an_output_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "alpha = 0.5\nn_samples = 10\n");
    let blocker = dir.path().join("not-a-dir");
    fs::write(&blocker, b"x").unwrap();
    let o = chaosep(&["generate", "--config", &cfg, "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("chaosep: error[output]"));
}

#[test]
fn seed_flag_changes_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "alpha = 0.5\nn_samples = 50\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = chaosep(&["generate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success());
    }
    assert_ne!(fs::read(a.join("s1.csv")).unwrap(), fs::read(b.join("s1.csv")).unwrap());
}

#[test]
fn estimator_and_interp_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    run_ok("estimate-alpha", &cfg, &out, "1");
    run_ok("interp-study", &cfg, &out, "1");
    let est = fs::read_to_string(out.join("alpha_estimates.csv")).unwrap();
    // Grid 0, 0.25, …, 1.
    assert_eq!(est.lines().count(), 6);
    assert_eq!(est.lines().next(), Some("true_alpha,corrected_estimate"));
    let fig6 = fs::read_to_string(out.join("fig6.csv")).unwrap();
    // Panel a: 2 spacings × 2 seeds; panel b: 3 queries × 2 seeds.
    assert_eq!(fig6.lines().count(), 1 + 4 + 6);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("correction.json")).unwrap()).unwrap();
    assert_eq!(json["coefficients"].as_array().unwrap().len(), 4);
}
