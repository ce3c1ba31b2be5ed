use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kfl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn kfl")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

#[test]
fn exit_codes_for_usage() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kfl(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(kfl(&["no-such-verb"], dir.path()).status.code(), Some(1));
    assert_eq!(
        kfl(&["dist", "missing.json", "other.json"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        kfl(
            &["experiment", "j-sandwich", "--grid-1d", "1000"],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn identical_files_are_at_distance_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfl(
        &[
            "potential",
            "--model",
            "dp3",
            "--family",
            "bumps",
            "--grid",
            "33",
            "--out",
            "u",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let o = kfl(&["dist", "u/bumps-0.json", "u/bumps-0.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["d1_l1"].as_f64(), Some(0.0));
}

#[test]
fn distance_matrix_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfl(
        &[
            "potential",
            "--model",
            "p2",
            "--family",
            "quadratic",
            "--count",
            "3",
            "--grid",
            "33",
            "--out",
            "q",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let o = kfl(
        &["--format", "csv", "dist", "--manifest", "q/manifest.json"],
        dir.path(),
    );
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["", "quadratic-0", "quadratic-1", "quadratic-2"]);
    for i in 1..4 {
        assert_eq!(rows[i][i], "0.0000000000000000e0");
        for j in 1..4 {
            assert_eq!(rows[i][j], rows[j][i]);
        }
    }
}

#[test]
fn bounded_functional_is_not_proper() {
    // the torus orbit: K-energy constant, d₁ unbounded
    let dir = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();
    for (k, scale) in [0.05, 0.1, 0.2, 0.4, 0.7, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0]
        .iter()
        .enumerate()
    {
        let out = format!("o{k}");
        let s = scale.to_string();
        let seed = k.to_string();
        let o = kfl(
            &[
                "potential",
                "--model",
                "p1",
                "--family",
                "orbit",
                "--seed",
                &seed,
                "--scale",
                &s,
                "--grid",
                "1025",
                "--out",
                &out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        entries.push(serde_json::json!({"label": format!("orbit-{k}"), "path": format!("{out}/orbit-{k}.json")}));
    }
    fs::write(
        dir.path().join("m.json"),
        serde_json::to_vec(&entries).unwrap(),
    )
    .unwrap();
    let o = kfl(
        &["properness", "--manifest", "m.json", "--out", "prop"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r: Value =
        serde_json::from_slice(&fs::read(dir.path().join("prop/properness.json")).unwrap())
            .unwrap();
    assert_eq!(r["proper"], Value::Bool(false));
    assert_eq!(r["n_samples"].as_u64(), Some(12));
    assert!(fs::read_to_string(dir.path().join("prop/properness.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn report_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfl(
        &[
            "potential",
            "--model",
            "p1",
            "--family",
            "symmetric",
            "--count",
            "2",
            "--grid",
            "4097",
            "--out",
            "s",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let o = kfl(&["report", "--manifest", "s/manifest.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = stdout_json(&o);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["am"].as_f64().unwrap().abs() < 1e-12);
        assert!(r["ding_tian_residual"].as_f64().unwrap() < 1e-3);
        assert!(r["e_beta"].as_f64().unwrap() >= r["ding"].as_f64().unwrap());
    }
}

#[test]
fn principle_reports_skips_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfl(&["principle", "toy:tilted", "--existence"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = stdout_json(&o);
    let props = r["hypotheses"]["properties"].as_array().unwrap();
    let status = |p: &str| props.iter().find(|x| x["property"] == p).unwrap()["status"].clone();
    assert_eq!(status("P2"), "skipped");
    assert_eq!(status("P3"), "skipped");
    assert_eq!(status("P7"), "fail");
    assert_eq!(r["existence"]["verdict"], "not-g-invariant");
    assert_eq!(
        kfl(&["principle", "toy:nope"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn experiment_is_deterministic_and_signals_failure() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec![
            "experiment",
            "j-sandwich",
            "--grid-1d",
            "4097",
            "--seed",
            "3",
            "--out",
            out,
        ];
        args.extend(extra);
        kfl(&args, dir.path())
    };
    assert_eq!(run("a", &[]).status.code(), Some(0));
    assert_eq!(run("b", &[]).status.code(), Some(0));
    let a = fs::read(dir.path().join("a/j-sandwich.json")).unwrap();
    let b = fs::read(dir.path().join("b/j-sandwich.json")).unwrap();
    assert_eq!(a, b);
    for ext in ["csv", "svg"] {
        assert!(dir.path().join(format!("a/j-sandwich.{ext}")).exists());
    }
    // an unattainable threshold turns the summary into a failure
    let o = run("c", &["--tol.sup_slack", "1e9"]);
    assert_eq!(o.status.code(), Some(2));
    let s: Value =
        serde_json::from_slice(&fs::read(dir.path().join("c/j-sandwich.json")).unwrap()).unwrap();
    assert_eq!(s["pass"], Value::Bool(false));
    assert_eq!(s["config"]["tol"]["sup_slack"].as_f64(), Some(1e9));
}
