use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonlocal-lab")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn malformed_config_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "recipe = eval-suite\nthis line has no separator\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "eval"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_recipe_and_bad_values_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["--out", out, "sweep", "--recipe", "no-such-recipe"])), 1);
    assert_eq!(code(&run(&["--out", out, "eval", "--spacing=-1"])), 1);
    assert_eq!(code(&run(&["--out", out, "eval", "--set", "novalue"])), 1);
    assert_eq!(code(&run(&["--out", out, "eval", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn missing_solution_file_exits_with_1() {
    let o = run(&["regularity", "--solution", "/nonexistent/field.csv", "--sigma", "1.5", "--tau", "0.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn all_points_failing_exits_with_2() {
    // M_L0 with drift has no monotone scheme
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "solve",
        "--spacing",
        "0.125",
        "--radius",
        "1.5",
        "--tau",
        "0.5",
        "--b-frac",
        "1",
        "--set",
        "operator=l0-plus",
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    assert_eq!(s["failed"], 1);
}

#[test]
fn hypothesis_violations_are_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "eval",
        "--sigma",
        "1.5",
        "--b",
        "0",
        "--b",
        "100",
        "--spacing",
        "0.0625",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    assert_eq!((s["ok"].as_u64(), s["skipped"].as_u64()), (Some(1), Some(1)));
    let skipped = s["points"].as_array().unwrap().iter().find(|p| p["status"] == "skipped").unwrap();
    assert!(skipped["reason"].as_str().unwrap().contains("H3"), "{skipped}");
}

#[test]
fn barrier_check_writes_one_row_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "barrier-check",
        "--sigma",
        "1.0",
        "--sigma",
        "1.5",
        "--sigma",
        "1.9",
        "--sigma",
        "1.99",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("barrier-suite.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "{csv}");
    assert!(lines[0].contains("delta_star"));
}

#[test]
fn identical_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let o = run(&[
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            "7",
            "--threads",
            threads,
            "eval",
            "--sigma",
            "1.2",
            "--sigma",
            "1.8",
            "--spacing",
            "0.0625",
        ]);
        assert_eq!(code(&o), 0);
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("eval-suite.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let c = tempfile::tempdir().unwrap();
    let o = run(&["--out", c.path().to_str().unwrap(), "--seed", "8", "eval", "--sigma", "1.2", "--sigma", "1.8", "--spacing", "0.0625"]);
    assert_eq!(code(&o), 0);
    assert_ne!(read(&a), read(&c));
}

#[test]
fn regularity_reads_a_saved_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["--out", out, "solve", "--spacing", "0.03125", "--set", "save_solutions=true"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sol = dir.path().join("solution_0.csv");
    assert!(sol.exists());
    let reg = dir.path().join("reg");
    let o = run(&[
        "--out",
        reg.to_str().unwrap(),
        "regularity",
        "--solution",
        sol.to_str().unwrap(),
        "--sigma",
        "1.5",
        "--tau",
        "0.5",
        "--center-stride",
        "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&reg);
    assert!(s["kappa"].as_f64().unwrap() > 0.0);
    assert!(reg.join("regularity-centers.csv").exists());
    assert!(reg.join("tail-fit.csv").exists());
}
