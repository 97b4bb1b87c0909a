//! CSV and text reports for campaigns.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{CampaignSummary, RecordStatus, ReplicationRecord, COVERAGE_LEVELS};
use crate::error::{Error, Result};

const RECORDS_TAG: &str = "# stablelad-records v1";
const SUMMARY_TAG: &str = "# stablelad-summary v1";

#[derive(Debug, Clone, PartialEq)]
pub struct RecordsMeta {
    pub config_hash: String,
    pub version: String,
    pub alpha0: f64,
    pub dim: usize,
}

fn numbered(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("{prefix}_{i}")).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub(crate) fn records_csv(records: &[ReplicationRecord], meta: &RecordsMeta) -> String {
    let m = meta.dim;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{RECORDS_TAG} config_hash={} version={} alpha0={} dim={m}",
        meta.config_hash, meta.version, meta.alpha0
    );
    let mut cols: Vec<String> = ["design", "rep", "seed", "n", "h", "status"].map(String::from).to_vec();
    cols.extend(numbered("theta_hat", m));
    cols.extend(numbered("err", m));
    cols.push("alpha_hat".into());
    cols.extend(numbered("u", m));
    cols.extend(numbered("z", m));
    cols.extend(["converged", "clamped", "iterations", "reason"].map(String::from));
    let _ = writeln!(s, "{}", cols.join(","));
    for r in records {
        let status = match r.status {
            RecordStatus::Ok => "ok",
            RecordStatus::Failed => "failed",
        };
        let reason = r.reason.replace([',', '\n', '\r'], ";");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{status},{},{},{},{},{},{},{},{},{reason}",
            r.design,
            r.rep,
            r.seed,
            r.n,
            r.h,
            join(&r.theta_hat),
            join(&r.theta_err),
            r.alpha_hat,
            join(&r.u),
            join(&r.z),
            r.converged,
            r.clamped,
            r.iterations
        );
    }
    s
}

pub(crate) fn summary_csv(summary: &CampaignSummary) -> String {
    let m = summary.designs.first().map_or(0, |d| d.rmse_u.len());
    let mut s = String::new();
    let _ = writeln!(s, "{SUMMARY_TAG} config_hash={} version={}", summary.config_hash, summary.version);
    let mut cols: Vec<String> =
        ["design", "n", "h", "rate", "replications", "failures", "failure_rate"].map(String::from).to_vec();
    cols.extend(numbered("rmse_u", m));
    cols.extend(numbered("rmse_err", m));
    cols.extend(numbered("ks", m));
    cols.extend(numbered("ks_p", m));
    cols.extend(["cover90", "cover95", "cover99", "alpha_bias", "alpha_rmse"].map(String::from));
    let _ = writeln!(s, "{}", cols.join(","));
    for d in &summary.designs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            d.design,
            d.n,
            d.h,
            d.rate,
            d.replications,
            d.failures,
            d.failure_rate(),
            join(&d.rmse_u),
            join(&d.rmse_err),
            join(&d.ks_stat),
            join(&d.ks_pvalue),
            d.coverage[0],
            d.coverage[1],
            d.coverage[2],
            d.alpha_bias,
            d.alpha_rmse
        );
    }
    s
}

pub(crate) fn summary_text(summary: &CampaignSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "stablelad {} campaign summary (config {})", summary.version, summary.config_hash);
    for d in &summary.designs {
        let _ = writeln!(s);
        let _ = writeln!(s, "design {}: n = {}, h = {:.6e}, r_n = {:.4}", d.design, d.n, d.h, d.rate);
        let _ = writeln!(
            s,
            "  replications {:>6}   failures {:>4} ({:.1}%)",
            d.replications,
            d.failures,
            100.0 * d.failure_rate()
        );
        for i in 0..d.rmse_u.len() {
            let _ = writeln!(
                s,
                "  theta_{}: rmse(u) {:>10.4}  rmse(err) {:>10.4e}  KS {:>6.4} (p = {:.4})",
                i + 1,
                d.rmse_u[i],
                d.rmse_err[i],
                d.ks_stat[i],
                d.ks_pvalue[i]
            );
        }
        let cov: Vec<String> =
            COVERAGE_LEVELS.iter().zip(d.coverage).map(|(l, c)| format!("{:.0}%: {c:.3}", 100.0 * l)).collect();
        let _ = writeln!(s, "  coverage  {}", cov.join("   "));
        let _ = writeln!(s, "  alpha_hat bias {:+.4}  rmse {:.4}", d.alpha_bias, d.alpha_rmse);
    }
    s
}

/// Writes `records.csv`, `summary.csv` and `summary.txt` into `dir`, all or
/// nothing.
pub fn emit_reports(
    summary: &CampaignSummary,
    records: &[ReplicationRecord],
    alpha0: f64,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::invalid("records", "empty record set"));
    }
    let meta = RecordsMeta {
        config_hash: summary.config_hash.clone(),
        version: summary.version.clone(),
        alpha0,
        dim: records[0].theta_hat.len(),
    };
    let files = [
        ("records.csv", records_csv(records, &meta)),
        ("summary.csv", summary_csv(summary)),
        ("summary.txt", summary_text(summary)),
    ];
    fs::create_dir_all(dir)?;
    let mut staged = Vec::new();
    for (name, body) in &files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, body) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        staged.push(tmp);
    }
    let mut out = Vec::new();
    for ((name, _), tmp) in files.iter().zip(&staged) {
        let dest = dir.join(name);
        fs::rename(tmp, &dest)?;
        out.push(dest);
    }
    Ok(out)
}

/// Parses a `records.csv` written by [`emit_reports`].
pub fn read_records(file: &Path) -> Result<(RecordsMeta, Vec<ReplicationRecord>)> {
    let text = fs::read_to_string(file)?;
    let mut lines = text.lines();
    let head = lines.next().ok_or(Error::Parse { row: 1, msg: "empty file".into() })?;
    let rest = head
        .strip_prefix(RECORDS_TAG)
        .ok_or_else(|| Error::Parse { row: 1, msg: format!("expected `{RECORDS_TAG}` header") })?;
    let mut meta = RecordsMeta { config_hash: String::new(), version: String::new(), alpha0: f64::NAN, dim: 0 };
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse { row: 1, msg: format!("bad field `{kv}`") })?;
        let bad = |e: String| Error::Parse { row: 1, msg: e };
        match k {
            "config_hash" => meta.config_hash = v.to_string(),
            "version" => meta.version = v.to_string(),
            "alpha0" => meta.alpha0 = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            "dim" => meta.dim = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            _ => {}
        }
    }
    let m = meta.dim;
    lines.next();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 3;
        let f: Vec<&str> = line.splitn(11 + 4 * m, ',').collect();
        if f.len() != 11 + 4 * m {
            return Err(Error::Parse { row, msg: "wrong number of fields".into() });
        }
        let perr = |s: &str| Error::Parse { row, msg: format!("cannot parse `{s}`") };
        let fl = |s: &str| s.parse::<f64>().map_err(|_| perr(s));
        let vec = |start: usize| -> Result<Vec<f64>> { (start..start + m).map(|j| fl(f[j])).collect() };
        let status = match f[5] {
            "ok" => RecordStatus::Ok,
            "failed" => RecordStatus::Failed,
            s => return Err(perr(s)),
        };
        let b = 6;
        records.push(ReplicationRecord {
            design: f[0].parse().map_err(|_| perr(f[0]))?,
            rep: f[1].parse().map_err(|_| perr(f[1]))?,
            seed: f[2].parse().map_err(|_| perr(f[2]))?,
            n: f[3].parse().map_err(|_| perr(f[3]))?,
            h: fl(f[4])?,
            status,
            theta_hat: vec(b)?,
            theta_err: vec(b + m)?,
            alpha_hat: fl(f[b + 2 * m])?,
            u: vec(b + 2 * m + 1)?,
            z: vec(b + 3 * m + 1)?,
            converged: f[b + 4 * m + 1].parse().map_err(|_| perr(f[b + 4 * m + 1]))?,
            clamped: f[b + 4 * m + 2].parse().map_err(|_| perr(f[b + 4 * m + 2]))?,
            iterations: f[b + 4 * m + 3].parse().map_err(|_| perr(f[b + 4 * m + 3]))?,
            reason: f[b + 4 * m + 4].to_string(),
        });
    }
    Ok((meta, records))
}
