//! End-to-end checks of the command-line surface.

use std::process::{Command, Output};

fn mgising(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgising"))
        .args(args)
        .output()
        .expect("spawn mgising")
}

fn expect_success(args: &[&str]) -> Output {
    let output = mgising(args);
    assert!(
        output.status.success(),
        "{args:?} failed with {:?}: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn simulate_fit_select_full_pca_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    expect_success(&[
        "simulate", "--n", "9", "--d", "2", "--t-ep", "80", "--epochs", "3", "--seed", "7",
        "--out", sim.to_str().unwrap(),
    ]);
    for name in ["raster.csv", "J_true.csv", "theta_true.csv", "meta.json", "manifest.json"] {
        assert!(sim.join(name).exists(), "{name} missing");
    }

    let fit = dir.path().join("fit");
    expect_success(&[
        "fit", "--data", sim.join("raster.csv").to_str().unwrap(),
        "--num-graphs", "2", "--lambda", "1000", "--epsilon", "1e-3",
        "--mc-samples", "0", "--seed", "1", "--snapshot-every", "120",
        "--out", fit.to_str().unwrap(),
    ]);
    assert!(fit.join("trace.csv").exists());
    assert!(fit.join("J_final.csv").exists());
    assert!(fit.join("J_t120.csv").exists());
    assert!(fit.join("J_t240.csv").exists());

    let manifest = mgising::io::RunManifest::read(&fit.join("manifest.json")).unwrap();
    assert_eq!(manifest.command, "fit");
    assert_eq!(manifest.seeds["fit"], 1);
    assert_eq!(manifest.inputs.len(), 1);
    assert!(manifest.outputs.iter().any(|o| o.ends_with("trace.csv")));

    let select = dir.path().join("select");
    expect_success(&[
        "select", "--data", sim.join("raster.csv").to_str().unwrap(),
        "--candidates", "1,2", "--t-ep", "80", "--mc-samples", "0",
        "--out", select.to_str().unwrap(),
    ]);
    let table = std::fs::read_to_string(select.join("selection.csv")).unwrap();
    assert!(table.starts_with("D,m,loglik,AIC\n"));
    assert_eq!(table.lines().count(), 3);

    let full = dir.path().join("full");
    expect_success(&[
        "full", "--data", sim.join("raster.csv").to_str().unwrap(),
        "--t-ep", "80", "--out", full.to_str().unwrap(),
    ]);
    assert!(full.join("full_trace.csv").exists());
    assert!(full.join("full_aic.csv").exists());

    let pca = dir.path().join("pca");
    let output = expect_success(&[
        "pca", "--trace", full.join("full_trace.csv").to_str().unwrap(),
        "--reference", sim.join("J_true.csv").to_str().unwrap(),
        "--components", "2", "--out", pca.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&output.stdout).contains("mean |corr|"));

    let eval = dir.path().join("eval");
    let output = expect_success(&[
        "eval", "--learned", fit.join("J_final.csv").to_str().unwrap(),
        "--reference", sim.join("J_true.csv").to_str().unwrap(),
        "--snapshots-dir", fit.to_str().unwrap(),
        "--out", eval.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&output.stdout).contains("corr ="));
    let stability = std::fs::read_to_string(eval.join("stability.csv")).unwrap();
    assert!(stability.starts_with("t,corr_1,corr_2\n"));
    assert_eq!(stability.lines().count(), 3);
}

#[test]
fn bin_subcommand_bins_and_selects_units() {
    let dir = tempfile::tempdir().unwrap();
    let spikes = dir.path().join("spikes.csv");
    let mut text = String::from("unit,time_s\n");
    // Three units; unit 2 fires the most, unit 3 the least.
    for k in 0..40 {
        text.push_str(&format!("2,{}\n", 0.005 + k as f64 * 0.01));
    }
    for k in 0..20 {
        text.push_str(&format!("1,{}\n", 0.002 + k as f64 * 0.02));
    }
    text.push_str("3,0.015\n");
    std::fs::write(&spikes, text).unwrap();

    let out = dir.path().join("binned");
    let output = expect_success(&[
        "bin", "--events", spikes.to_str().unwrap(),
        "--bin-width", "0.01", "--t-start", "0", "--t-end", "0.4",
        "--top-units", "2", "--out", out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("40 bins x 2 units"), "{stdout}");

    let raster = mgising::io::read_raster_csv(&out.join("raster.csv")).unwrap();
    assert_eq!(raster.node_count(), 2);
    assert_eq!(raster.labels().unwrap(), &["1".to_string(), "2".to_string()]);
    assert_eq!(raster.len(), 40);

    // Default range covers all events; default top-units caps at the count.
    let out2 = dir.path().join("binned2");
    expect_success(&[
        "bin", "--events", spikes.to_str().unwrap(),
        "--out", out2.to_str().unwrap(),
    ]);
    let full = mgising::io::read_raster_csv(&out2.join("raster.csv")).unwrap();
    assert_eq!(full.node_count(), 3);
}

#[test]
fn usage_errors_exit_2() {
    let unknown_flag = mgising(&["fit", "--unknown-flag", "3"]);
    assert_eq!(unknown_flag.status.code(), Some(2));
    let unknown_subcommand = mgising(&["frobnicate"]);
    assert_eq!(unknown_subcommand.status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_3_with_the_failing_time_bin() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    expect_success(&[
        "simulate", "--n", "3", "--d", "1", "--t-ep", "20", "--epochs", "1", "--seed", "2",
        "--out", sim.to_str().unwrap(),
    ]);
    // A constant initial column cannot be rescaled to unit variance.
    let init = dir.path().join("init.csv");
    std::fs::write(&init, "#N=3,D=1\n1\n1\n1\n1\n1\n1\n").unwrap();
    let out = dir.path().join("fit");
    let output = mgising(&[
        "fit", "--data", sim.join("raster.csv").to_str().unwrap(),
        "--num-graphs", "1", "--epsilon", "0", "--init-graphs", init.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("time bin 1"), "{stderr}");
    assert!(stderr.contains("zero variance"), "{stderr}");
}

#[test]
fn invalid_arguments_exit_1_before_any_fit() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let output = mgising(&[
        "fit", "--data", missing.to_str().unwrap(), "--num-graphs", "2",
        "--out", dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn out_dir_env_var_is_honored_when_flag_absent() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("env_out");
    let output = Command::new(env!("CARGO_BIN_EXE_mgising"))
        .args([
            "simulate", "--n", "3", "--d", "1", "--t-ep", "10", "--epochs", "1", "--seed", "1",
        ])
        .env("MGISING_OUT", &env_out)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(env_out.join("raster.csv").exists());
    assert!(!dir.path().join("out").exists());
}
