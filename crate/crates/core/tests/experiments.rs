use std::path::PathBuf;

use stablelad::experiments::{read_records, RecordStatus};
use stablelad::{run_campaign, RunConfig};

fn config(name: &str, overrides: &[&str]) -> RunConfig {
    let file = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::load(&file, &o).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

const SMALL: &[&str] =
    &["replications=6", "design.n=[512, 1024]", "model.theta_lo=[-10.0, -10.0]", "model.theta_hi=[10.0, 10.0]"];

#[test]
fn shipped_configs_parse() {
    for name in ["fixed_t.toml", "ergodic.toml", "bernoulli_tempered.toml"] {
        let c = config(name, &[]);
        assert!(!c.designs.is_empty(), "{name}");
        assert_eq!(c.hash.len(), 64);
    }
    assert_eq!(config("ergodic.toml", &[]).model.weight.power, 2.0);
}

#[test]
fn campaign_is_deterministic() {
    let c = config("fixed_t.toml", SMALL).campaign(None);
    let a = run_campaign(&c).unwrap();
    let b = run_campaign(&c).unwrap();
    assert_eq!(a.records.len(), 12);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.seed, y.seed);
        assert_eq!(bits(&x.theta_hat), bits(&y.theta_hat));
        assert_eq!(x.alpha_hat.to_bits(), y.alpha_hat.to_bits());
        assert_eq!(x.reason, y.reason);
    }
    let mut seeds: Vec<u64> = a.records.iter().map(|r| r.seed).collect();
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), 12);
}

#[test]
fn reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("fixed_t.toml", SMALL);
    let run = run_campaign(&cfg.campaign(Some(dir.path().to_path_buf()))).unwrap();
    for f in ["records.csv", "summary.csv", "summary.txt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert!(text.starts_with("# stablelad-records v1"));
    let (meta, records) = read_records(&dir.path().join("records.csv")).unwrap();
    assert_eq!(meta.config_hash, cfg.hash);
    assert_eq!(meta.dim, 2);
    assert_eq!(meta.alpha0, 1.7);
    assert_eq!(records.len(), run.records.len());
    for (a, b) in records.iter().zip(&run.records) {
        assert_eq!((a.design, a.rep, a.seed, a.n), (b.design, b.rep, b.seed, b.n));
        assert_eq!(a.status, b.status);
        assert_eq!(bits(&a.theta_hat), bits(&b.theta_hat));
        assert_eq!(bits(&a.u), bits(&b.u));
        assert_eq!(bits(&a.z), bits(&b.z));
        assert_eq!(a.reason, b.reason);
        assert_eq!(a.status == RecordStatus::Ok, a.theta_hat.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn unwritable_output_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = config("fixed_t.toml", SMALL);
    let err = run_campaign(&cfg.campaign(Some(blocker.join("sub")))).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn config_errors_name_the_key() {
    let base =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/fixed_t.toml")).unwrap();
    let e = RunConfig::parse(&base.replace("[levy]\nalpha = 1.7", "[levy]"), &[]).unwrap_err();
    assert!(e.to_string().contains("levy.alpha"), "{e}");
    assert_eq!(e.exit_code(), 1);
    let e = RunConfig::parse(&base, &["design.horizn=\"fixed\"".into()]).unwrap_err();
    assert!(e.to_string().contains("horizon"), "{e}");
    let e = RunConfig::parse(&base, &["levy.alpha=2.0".into()]).unwrap_err();
    assert!(e.to_string().contains("levy.alpha"), "{e}");
    let e = RunConfig::parse(&base, &["design.delta=0.5".into()]).unwrap_err();
    assert!(e.to_string().contains("design.delta"), "{e}");
}
