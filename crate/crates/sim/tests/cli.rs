use std::path::Path;
use std::process::{Command, Output};

fn cellfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree")).args(args).env_remove("CELLFREE_OUT_DIR").output().expect("spawn cellfree")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--set", "L=3", "--set", "N=2", "--set", "K=2", "--set", "M=1",
    "--set", "sweep_axis=N", "--set", "sweep_values=[1,2]", "--set", "n_setups=2",
    "--set", "n_stat=40", "--set", "n_realizations=20", "--set", "batches=4",
];

fn run_tiny(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--quiet", "run", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    cellfree(&args)
}

#[test]
fn missing_config_file_is_a_config_error_naming_the_path() {
    let o = cellfree(&["validate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/run.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_override_key_is_rejected() {
    let o = cellfree(&["validate", "--set", "antennas=4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("antennas"));
}

#[test]
fn validate_reports_every_violation() {
    let ok = cellfree(&["validate", "--preset", "fig3"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert_eq!(String::from_utf8_lossy(&ok.stdout).trim(), "ok");

    let bad = cellfree(&["validate", "--set", "tau_p=3", "--set", "tau_c=4"]);
    assert_eq!(bad.status.code(), Some(2));
    let out = String::from_utf8_lossy(&bad.stdout);
    assert!(out.lines().filter(|l| l.starts_with("violation:")).count() >= 2, "{out}");
}

#[test]
fn toml_file_and_overrides_layer_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[system]\nK = 4\nM = 2\n").unwrap();
    let o = cellfree(&["validate", "--config", path.to_str().unwrap(), "--set", "M=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(&path, "[system]\nK = 4\nM = 2\ntau_p = 3\n").unwrap();
    let o = cellfree(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_results_plot_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_tiny(dir.path(), &["--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_axis,sweep_value,bound,per_user_se_mean,per_user_se_stderr,sum_se_mean,sum_se_stderr,n_setups,n_realizations,outages"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for bound in ["no_csi", "perfect_csi", "dl_pilots"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(2) == Some(bound)).count(), 2);
    }

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let run_id = manifest["run_id"].as_str().unwrap();
    assert_eq!(run_id.len(), 16);
    assert_eq!(manifest["threads"], 1);
    assert_eq!(manifest["points"].as_array().unwrap().len(), 2);
    let dat = std::fs::read_to_string(dir.path().join("se_vs_N.dat")).unwrap();
    assert!(dat.contains(&format!("run_id={run_id}")));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_tiny(a.path(), &["--threads", "1"]).status.success());
    assert!(run_tiny(b.path(), &["--threads", "3"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("results.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn out_directory_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["--quiet", "geometry"];
    args.extend_from_slice(TINY);
    let o = Command::new(env!("CARGO_BIN_EXE_cellfree")).args(&args).env("CELLFREE_OUT_DIR", dir.path()).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let geo = std::fs::read_to_string(dir.path().join("geometry.csv")).unwrap();
    assert!(geo.starts_with("entity_type,index,x_m,y_m"));
    assert_eq!(geo.lines().count(), 1 + 3 + 2);
    assert!(dir.path().join("large_scale.csv").exists());
}

#[test]
fn diagnostics_subcommands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut base = vec!["--quiet"];
    for (cmd, file) in [("dump-channel", "channel_s0_r0.csv"), ("calibrate", "eff_stats_s0.csv")] {
        base.truncate(1);
        base.extend_from_slice(&[cmd, "--out", out]);
        base.extend_from_slice(TINY);
        let o = cellfree(&base);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        assert!(dir.path().join(file).exists(), "{cmd} did not write {file}");
    }
    let o = cellfree(&["--quiet", "hardening", "--n-list", "4,8", "--trials", "200", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("hardening.csv")).unwrap().lines().count(), 3);
}
