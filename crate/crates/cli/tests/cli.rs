use std::process::{Command, Output};

use serde_json::Value;

fn gqfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gqfi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn state_of_balanced_thermal_pair() {
    let o = gqfi(&[
        "state", "--nbar", "1", "--mbar", "1", "--r", "0", "--phi", "0",
    ]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("# symplectic_eigenvalues: [3.0,3.0]"));
    assert!(s.contains("# conventions: hbar=2, vacuum variance 1, ordering QQPP"));
    let rows: Vec<&str> = s.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "row,q1,q2,p1,p2");
    for (i, row) in rows[1..].iter().enumerate() {
        let cells: Vec<f64> = row.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        for (j, v) in cells.iter().enumerate() {
            assert_eq!(*v, if i == j { 3.0 } else { 0.0 });
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let bad_flag = gqfi(&["qfi", "--no-such-flag"]);
    assert_eq!(bad_flag.status.code(), Some(1));
    let negative = gqfi(&["qfi", "--nbar", "-1"]);
    assert_eq!(negative.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&negative.stderr).contains("usage: gqfi"));
    let wrong_preset = gqfi(&["spectrum", "--preset", "fig3a"]);
    assert_eq!(wrong_preset.status.code(), Some(1));
}

#[test]
fn sweep_is_byte_identical_under_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let o = gqfi(&[
            "sweep",
            "--preset",
            "fig3a",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn sequential_and_parallel_sweeps_match() {
    let par = gqfi(&["sweep", "--preset", "fig4b"]);
    let seq = gqfi(&["sweep", "--preset", "fig4b", "--sequential"]);
    let strip = |o: &Output| {
        stdout(o)
            .lines()
            .filter(|l| !l.starts_with("# config"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&par), strip(&seq));
}

#[test]
fn json_output_carries_metadata_and_rows() {
    let o = gqfi(&[
        "qfi", "--nbar", "1", "--mbar", "1", "--r", "0.5", "--phi", "1", "--format", "json",
    ]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["metadata"]["command"], "qfi");
    assert_eq!(
        v["metadata"]["conventions"],
        "hbar=2, vacuum variance 1, ordering QQPP"
    );
    assert_eq!(v["metadata"]["config"]["params"]["r"], 0.5);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!((r["qfi"].as_f64().unwrap() - 9.9439).abs() < 1e-3);
    }
}

#[test]
fn tau_flag_sets_beam_splitter_angle() {
    let o = gqfi(&["state", "--tau", "0.5", "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let phi = v["metadata"]["config"]["params"]["phi"].as_f64().unwrap();
    assert!((phi - std::f64::consts::FRAC_PI_4).abs() < 1e-11);
}

#[test]
fn csv_numbers_have_twelve_significant_digits() {
    let o = gqfi(&[
        "qfi",
        "--r",
        "0.3",
        "--phi",
        "0.7",
        "--engine",
        "closed_form",
    ]);
    let s = stdout(&o);
    let row = s.lines().last().unwrap();
    let qfi = row.split(',').nth(4).unwrap();
    let mantissa = qfi
        .split('e')
        .next()
        .unwrap()
        .trim_start_matches('-')
        .replace('.', "");
    assert_eq!(mantissa.len(), 12);
}

#[test]
fn validate_suite_passes() {
    let o = gqfi(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let s = stdout(&o);
    assert!(s.contains("# failed: []"));
    assert!(!s.lines().any(|l| l.split(',').nth(1) == Some("fail")));
}
