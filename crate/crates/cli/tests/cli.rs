use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_statecon"))
}

fn problem(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("problems").join(format!("{name}.ocp")).display().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("statecon-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_exit_codes() {
    assert_eq!(run(&["verify", &problem("atoms"), "--grid", "200"]).status.code(), Some(0));
    let o = run(&["verify", &problem("density"), "--grid", "200"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("NONNEG_DENSITY") && stdout(&o).contains("verdict: FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["verify", "/nonexistent.ocp"]).status.code(), Some(1));
    assert_eq!(run(&["verify", &problem("atoms"), "--param", "zz=1"]).status.code(), Some(1));
    assert_eq!(run(&["verify", &problem("atoms"), "--grid", "x"]).status.code(), Some(1));
    assert_eq!(run(&["example", "unknown"]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
}

#[test]
fn param_override_changes_atoms() {
    let o = run(&["example", "atoms", "--param", "a=2", "--grid", "200"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("atoms: t1 2.000000000, t2 2.000000000"), "{}", stdout(&o));
}

#[test]
fn verify_json_and_csv() {
    let dir = scratch("verify");
    let report = dir.join("r.json");
    let o = run(&[
        "verify",
        &problem("atoms"),
        "--grid",
        "100",
        "--report",
        report.to_str().unwrap(),
        "--csv-out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["problem"], "atoms");
    assert_eq!(v["grid"], 100);
    assert_eq!(v["verdict"], true);
    assert_eq!(v["conditions"].as_array().unwrap().len(), 12);
    assert!((v["atoms"]["t1"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let mut rdr = csv::Reader::from_path(dir.join("multipliers.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["t", "side", "psi_z", "psi_x", "density", "h1", "measure"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    // 3 × 101 nodes
    assert_eq!(rows.len(), 303);
    let psi_x: f64 = rows[0][3].parse().unwrap();
    assert!((psi_x - 1.0).abs() < 1e-12);
    assert!(dir.join("state.csv").exists());
}

#[test]
fn reduce_b_reports_alpha() {
    let dir = scratch("reduce");
    let report = dir.join("b.json");
    let o = run(&[
        "reduce-b",
        &problem("atoms"),
        "--grid",
        "200",
        "--report",
        report.to_str().unwrap(),
        "--csv-out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!((v["alpha1"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(v["rho"], serde_json::json!([1.0, 1.0, 1.0]));
    assert!(dir.join("problem_b.csv").exists());
    let o = run(&["reduce-b", &problem("density"), "--grid", "200"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("B_NONNEG_ALPHA"));
}

#[test]
fn variation_report() {
    let dir = scratch("variation");
    let report = dir.join("v.json");
    let o = run(&[
        "variation",
        &problem("density"),
        "--grid",
        "200",
        "--kappa",
        "1 + (t - 1)*(2 - t)",
        "--random",
        "2",
        "--seed",
        "3",
        "--report",
        report.to_str().unwrap(),
    ]);
    // the bump family certifies the negative density
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ks = v["kappas"].as_array().unwrap();
    assert_eq!(ks.len(), 3);
    for k in ks {
        assert!(k["pairing_rel"].as_f64().unwrap() <= 1e-6);
        assert_eq!(k["pass"], true);
        assert_eq!(k["ladder"].as_array().unwrap().len(), 3);
    }
    assert_eq!(v["family"]["nonnegative"], false);
    assert!(v["family"]["min_value"].as_f64().unwrap() <= -1e-3);

    let o = run(&["variation", &problem("atoms"), "--grid", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn seeded_runs_repeat() {
    let args = ["variation", &problem("noatom"), "--grid", "100", "--random", "2", "--seed", "11"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["variation", &problem("noatom"), "--grid", "100", "--random", "2", "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn sheared_problem_matches_atoms() {
    let a = stdout(&run(&["example", "atoms", "--grid", "200"]));
    let s = stdout(&run(&["example", "sheared", "--grid", "200"]));
    let tail = |s: &str| {
        s.lines().filter(|l| l.contains("atoms:") || l.contains("verdict")).map(str::to_string).collect::<Vec<_>>()
    };
    assert_eq!(tail(&a), tail(&s));
}
