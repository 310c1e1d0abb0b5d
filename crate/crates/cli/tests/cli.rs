use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn hodgelab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hodgelab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HODGELAB_OUT")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn mesh(dir: &Path, args: &[&str]) -> Value {
    let mut a = vec!["mesh"];
    a.extend_from_slice(args);
    json(&hodgelab(dir, &a))
}

#[test]
fn mesh_summaries_report_euler_characteristic() {
    let dir = tempfile::tempdir().unwrap();
    let t2 = mesh(dir.path(), &["torus2", "--n", "8"]);
    assert_eq!(t2["chi"], 0);
    assert_eq!(t2["V"], 64);
    assert_eq!(t2["E"], 192);
    assert_eq!(t2["betti"], serde_json::json!([1, 2, 1]));
    assert_eq!(t2["schema_version"], 1);
    assert_eq!(mesh(dir.path(), &["icosphere", "--subdiv", "1"])["chi"], 2);
    assert_eq!(mesh(dir.path(), &["cp2"])["chi"], 3);
    assert!(dir.path().join("torus2_n8.json").exists());
    assert!(dir.path().join("cp2.summary.json").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["mesh", "klein"],
        vec!["mesh", "torus2", "--subdiv", "1"],
        vec!["mesh", "circle", "--n", "2"],
        vec!["index", "--mesh", "missing.json"],
        vec!["accept", "--only", "14"],
        vec!["frobnicate"],
    ] {
        let out = hodgelab(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hodgelab"))
        .args(["mesh", "circle", "--n", "6"])
        .env("HODGELAB_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("circle_n6.json").exists());
    assert!(dir.path().join("circle_n6.summary.json").exists());
}

#[test]
fn index_and_signature() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d, &["icosphere", "--subdiv", "1"]);
    mesh(d, &["cp2"]);
    mesh(d, &["torus2", "--n", "4"]);
    mesh(d, &["torus4", "--n", "2"]);

    let s2 = json(&hodgelab(
        d,
        &[
            "index",
            "--mesh",
            d.join("icosphere_s1.json").to_str().unwrap(),
        ],
    ));
    assert_eq!(s2["index"], 2);
    assert_eq!(s2["index_matches_chi"], true);
    assert!(s2.get("signature").is_none());

    let cp2 = json(&hodgelab(
        d,
        &[
            "index",
            "--mesh",
            d.join("cp2.json").to_str().unwrap(),
            "--signature",
        ],
    ));
    assert_eq!(cp2["signature"], 1);
    assert_eq!(cp2["index"], 3);

    let t4 = json(&hodgelab(
        d,
        &[
            "index",
            "--mesh",
            d.join("torus4_n2.json").to_str().unwrap(),
            "--signature",
        ],
    ));
    assert_eq!(t4["signature"], 0);
    assert_eq!(t4["index"], 0);

    let t2 = d.join("torus2_n4.json");
    let out = hodgelab(d, &["index", "--mesh", t2.to_str().unwrap(), "--signature"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ambiguous_rank_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d, &["torus2", "--n", "4"]);
    let t2 = d.join("torus2_n4.json");
    // a threshold in the middle of the nonzero spectrum has no clean gap
    let out = hodgelab(
        d,
        &["index", "--mesh", t2.to_str().unwrap(), "--rank-tol", "0.5"],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("gap ratio"));
}

#[test]
fn funcalc_probes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d, &["torus2", "--n", "4"]);
    let t2 = d.join("torus2_n4.json");
    let t2 = t2.to_str().unwrap();

    let sweep = json(&hodgelab(
        d,
        &[
            "funcalc", "--mesh", t2, "--sweep", "--p", "2", "--points", "9",
        ],
    ));
    let sup = sweep["sweep_summary"][0]["sup"].as_f64().unwrap();
    assert!(sup <= 1.0 + 1e-10 && sup > 0.9, "{sup}");
    assert_eq!(sweep["sweep_summary"][0]["contractive"], true);
    let csv = std::fs::read_to_string(d.join("torus2_n4.sweep_p2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);

    let sym = json(&hodgelab(
        d,
        &[
            "funcalc",
            "--mesh",
            t2,
            "--symbol",
            "rational1",
            "--nodes",
            "64",
        ],
    ));
    assert!(sym["symbol"]["relative_error"].as_f64().unwrap() < 1e-8);
    assert_eq!(sym["symbol"]["contour"]["kind"], "bisector");

    let sign = json(&hodgelab(
        d,
        &["funcalc", "--mesh", t2, "--sign", "--compare"],
    ));
    assert!(sign["sign"]["oracle_difference"].as_f64().unwrap() < 1e-6);
    assert_eq!(sign["sign"]["pass"], true);

    let p = json(&hodgelab(
        d,
        &[
            "funcalc", "--mesh", t2, "--sweep", "--p", "1", "inf", "--points", "3",
        ],
    ));
    assert_eq!(p["sweep"][1]["p"], "inf");
    assert!(p["sweep_summary"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["finite"] == true));

    let hinf = json(&hodgelab(
        d,
        &["funcalc", "--mesh", t2, "--hinf", "--points", "5"],
    ));
    assert!(hinf["hinf"][0]["sup"].as_f64().unwrap() <= 1.0 + 1e-9);

    for bad in [
        vec!["funcalc", "--mesh", t2, "--symbol", "exp"],
        vec!["funcalc", "--mesh", t2],
        vec!["funcalc", "--mesh", t2, "--compare"],
        vec!["funcalc", "--mesh", t2, "--sweep", "--p", "0.5"],
    ] {
        assert_eq!(hodgelab(d, &bad).status.code(), Some(2), "{bad:?}");
    }
}

#[test]
fn laplacian_symbol_uses_the_sector() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d, &["icosphere", "--subdiv", "0"]);
    let s2 = d.join("icosphere_s0.json");
    let out = json(&hodgelab(
        d,
        &[
            "funcalc",
            "--mesh",
            s2.to_str().unwrap(),
            "--operator",
            "laplacian",
            "--symbol",
            "rational1",
            "--nodes",
            "128",
        ],
    ));
    assert_eq!(out["symbol"]["contour"]["kind"], "sector");
    assert!(out["symbol"]["relative_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn acceptance_reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let out = hodgelab(d, &["accept", "--only", "5,9,11,13", "--seed", "7"]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
    let ra = std::fs::read(a.path().join("accept.json")).unwrap();
    let rb = std::fs::read(b.path().join("accept.json")).unwrap();
    assert_eq!(ra, rb);
    let v: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["all_passed"], true);
    assert!(a.path().join("accept.timings.json").exists());
}

#[test]
fn failing_items_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = hodgelab(dir.path(), &["accept", "--only", "6"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[FAIL]  6"), "{stdout}");
    let v: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("accept.json")).unwrap()).unwrap();
    assert_eq!(v["failed"], serde_json::json!([6]));
}

#[test]
fn config_file_supplies_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let text = r#"{
  "schema_version": 1,
  "operator": "dirac",
  "passes": [],
  "tolerances": {"rank_tol": 1e-8, "fcalc": 1e-8, "sign": 1e-6, "bisectorial": 1e-10},
  "output_dir": "ignored",
  "seed": 11
}"#;
    std::fs::write(&cfg, text).unwrap();
    let out = hodgelab(
        dir.path(),
        &["--config", cfg.to_str().unwrap(), "accept", "--only", "5"],
    );
    assert!(out.status.success());
    let v: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("accept.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 11);

    std::fs::write(
        &cfg,
        text.replace("\"schema_version\": 1", "\"schema_version\": 9"),
    )
    .unwrap();
    let out = hodgelab(
        dir.path(),
        &["--config", cfg.to_str().unwrap(), "accept", "--only", "5"],
    );
    assert_eq!(out.status.code(), Some(2));
}
