use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stablelad"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let cfg = config("fixed_t.toml");
    let mut args = vec!["simulate", "--config", s(&cfg), "--out", s(dir), "--override", "design.n=2000", "--quiet"];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn simulate_writes_n_plus_one_rows() {
    let d = tempfile::tempdir().unwrap();
    let o = simulate(d.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(d.path().join("path.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x"));
    assert_eq!(lines.count(), 2001);
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    simulate(a.path(), &["--seed", "9"]);
    simulate(b.path(), &["--seed", "9"]);
    simulate(c.path(), &["--seed", "10"]);
    let read = |d: &Path| fs::read(d.join("path.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
}

#[test]
fn missing_alpha_is_a_validation_error() {
    let d = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("fixed_t.toml")).unwrap().replace("alpha = 1.7", "");
    let cfg = d.path().join("c.toml");
    fs::write(&cfg, text).unwrap();
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(d.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("levy.alpha"));
}

#[test]
fn estimate_round_trip() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), &[]);
    let path = d.path().join("path.csv");
    let o = run(&["estimate", s(&path), "--config", s(&config("fixed_t.toml")), "--out", s(d.path()), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("estimate.csv").is_file());
    assert!(d.path().join("estimate.txt").is_file());
}

#[test]
fn constant_path_is_an_estimation_error() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("flat.csv");
    fs::write(&path, format!("x\n{}", "1.0\n".repeat(500))).unwrap();
    let o = run(&["estimate", s(&path), "--h", "0.002", "--config", s(&config("fixed_t.toml")), "--out", s(d.path())]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn mismatched_regressor_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--config",
        s(&config("bernoulli_tempered.toml")),
        "--regressor",
        "exact-linear",
        "--out",
        s(d.path()),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn index_is_scale_free() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), &[]);
    let text = fs::read_to_string(d.path().join("path.csv")).unwrap();
    let mut scaled = String::from("x\n");
    let mut plain = String::from("x\n");
    for line in text.lines().skip(1) {
        let x: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        plain += &format!("{x}\n");
        scaled += &format!("{}\n", 8.0 * x);
    }
    fs::write(d.path().join("a.csv"), plain).unwrap();
    fs::write(d.path().join("b.csv"), scaled).unwrap();
    let alpha = |f: &str| {
        let o = run(&["index", s(&d.path().join(f)), "--rho", "0.3"]);
        assert_eq!(code(&o), 0);
        String::from_utf8(o.stdout).unwrap().lines().next().unwrap().to_string()
    };
    assert_eq!(alpha("a.csv"), alpha("b.csv"));
}

#[test]
fn index_rejects_short_files() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("short.csv");
    fs::write(&p, "x\n0\n1\n0\n1\n0\n").unwrap();
    assert_eq!(code(&run(&["index", s(&p)])), 1);
}

#[test]
fn missing_input_is_an_io_error() {
    assert_eq!(code(&run(&["index", "/nonexistent/path.csv"])), 3);
}

#[test]
fn mc_honours_overrides_and_writes_reports() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "mc",
        "--config",
        s(&config("fixed_t.toml")),
        "--out",
        s(d.path()),
        "--override",
        "replications=2",
        "--override",
        "design.n=[2048]",
        "--quiet",
    ]);
    assert!([0, 2].contains(&code(&o)), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["records.csv", "summary.csv", "summary.txt"] {
        assert!(d.path().join(f).is_file(), "{f}");
    }
    let rows = fs::read_to_string(d.path().join("records.csv")).unwrap().lines().count();
    assert_eq!(rows, 2 + 2);
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest", "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn bad_flag_exits_one() {
    assert_eq!(code(&run(&["simulate", "--bogus"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}
