use std::path::Path;

use charlier_core::harness::cli::run;
use charlier_core::harness::{embedded_config, TABLE_HEADER};

const SMALL: &str = r#"{
    "schema_version": 1,
    "model": {"kind": "erlang_a", "lambda": {"type": "sinusoid", "base": 12, "amplitude": 3},
              "mu": 1, "beta": 0.2, "c": 10},
    "initial": {"type": "poisson", "mean": 10},
    "horizon": 1, "dt_out": 0.01, "dt_int": 0.01,
    "orders": [1, 3],
    "simulation": {"n_paths": 500, "groups": 10}
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn charlier(args: &[&str]) -> i32 {
    run(std::iter::once("charlier").chain(args.iter().copied()))
}

#[test]
fn table_writes_header_and_reproduces_from_embedded_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("t.csv");
    assert_eq!(charlier(&["table", "--config", &cfg, "--out", out.to_str().unwrap()]), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.lines().any(|l| l == TABLE_HEADER));

    let embedded = embedded_config(&csv).unwrap();
    let cfg2 = write_config(dir.path(), &embedded.canonical_json());
    let out2 = dir.path().join("t2.csv");
    assert_eq!(charlier(&["table", "--config", &cfg2, "--out", out2.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read_to_string(&out2).unwrap(), csv);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("t.csv");
    let o = out.to_str().unwrap();
    assert_eq!(charlier(&["table", "--config", &cfg, "--out", o, "--N", "2", "--T", "0.5", "--Xmax", "60"]), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().skip_while(|l| *l != TABLE_HEADER).skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("2,"));
    assert!(csv.contains("# T 0.5 "));
    assert!(csv.contains("x_max=60"));
}

#[test]
fn closure_output_carries_flag_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("c.csv");
    assert_eq!(charlier(&["solve-closure", "--config", &cfg, "--order", "1", "--out", out.to_str().unwrap()]), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    let header = csv.lines().find(|l| l.starts_with("t,")).unwrap();
    assert!(header.ends_with(",flag,flag_fraction"));
    // β < μ pushes the variance above the mean.
    let last: f64 = csv.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(last > 0.5, "{last}");
}

#[test]
fn every_solver_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for (cmd, header) in [
        ("solve-reference", "t,mean,variance,cum3,cum4,delay"),
        ("solve-galerkin", "t,mean,variance,cum3,cum4,delay"),
        ("simulate", "t,mean,mean_se,variance,variance_se"),
        ("figures", "t,ref_mean,ref_variance,ref_delay"),
    ] {
        let out = dir.path().join(format!("{cmd}.csv"));
        assert_eq!(charlier(&[cmd, "--config", &cfg, "--N", "3", "--out", out.to_str().unwrap()]), 0, "{cmd}");
        let csv = std::fs::read_to_string(&out).unwrap();
        assert!(csv.lines().any(|l| l.starts_with(header)), "{cmd}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(charlier(&["table", "--config", &cfg, "--frobnicate"]), 2);
    assert_eq!(charlier(&["solve-closure", "--config", &cfg, "--order", "2"]), 2);
    assert_eq!(charlier(&["table", "--config", &cfg, "--solver", "simulate"]), 2);
    assert_eq!(charlier(&["no-such-command"]), 2);
    let bad = write_config(dir.path(), &SMALL.replace("\"mu\"", "\"nu\""));
    assert_eq!(charlier(&["table", "--config", &bad]), 2);
    let missing = dir.path().join("absent.json");
    assert_eq!(charlier(&["table", "--config", missing.to_str().unwrap()]), 2);
}

#[test]
fn validate_passes_on_a_clean_build() {
    assert_eq!(charlier(&["validate"]), 0);
}
