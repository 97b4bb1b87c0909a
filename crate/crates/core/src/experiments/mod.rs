//! Monte Carlo campaigns: simulate, estimate and studentize over a grid of
//! designs, then aggregate rate, normality and coverage diagnostics.

mod diagnostics;
mod report;

use std::path::PathBuf;

use rayon::prelude::*;

pub use diagnostics::{ks_normal, ks_two_sample, normality_report, NormalityReport, COVERAGE_LEVELS, MIN_RECORDS};
pub use report::{emit_reports, read_records, RecordsMeta};

use crate::error::{Error, Result};
use crate::estimate::{estimate_path, mat_vec, rate};
use crate::index_scale::{covariance_from_scales, inverse_sqrt, true_scales, PowerVariationConfig, ScaleMode};
use crate::regressors::RegressorKind;
use crate::rng;
use crate::sde_sim::{simulate_path, ModelSpec, SamplingDesign};
use crate::stable_noise::stable_density_at_zero;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// How the scaled error is turned into the pivot `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Studentizer {
    /// `z = 𝒜̂^(−1/2) r̂_n (θ̂ − θ₀)` with α̂, spot or constant scales and θ̂.
    Plugin,
    /// True α and true σ in both the rate and the covariance.
    Oracle,
    /// `z = u`.
    Identity,
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub model: ModelSpec,
    pub designs: Vec<SamplingDesign>,
    pub regressor: RegressorKind,
    pub pv: PowerVariationConfig,
    pub scale_mode: ScaleMode,
    pub studentizer: Studentizer,
    pub replications: usize,
    pub base_seed: u64,
    pub fine_factor: usize,
    pub output_dir: Option<PathBuf>,
    pub config_hash: String,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.regressor.check_pairing(&self.model.drift)?;
        if self.designs.is_empty() {
            return Err(Error::invalid("design.n", "at least one design is required"));
        }
        if self.designs.windows(2).any(|w| w[0].n >= w[1].n) {
            return Err(Error::invalid("design.n", "designs must be ordered by increasing n"));
        }
        for d in &self.designs {
            d.validate()?;
            self.pv.validate(&self.model.levy, d.horizon, d.h)?;
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if self.fine_factor == 0 {
            return Err(Error::invalid("fine_factor", "must be at least 1"));
        }
        Ok(())
    }

    /// Seed of replication `rep` of design `design`.
    pub fn replication_seed(&self, design: usize, rep: usize) -> u64 {
        rng::derive_seed(self.base_seed, &[rng::tag::REPLICATION, design as u64, rep as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub design: usize,
    pub rep: usize,
    pub seed: u64,
    pub n: usize,
    pub h: f64,
    pub status: RecordStatus,
    pub theta_hat: Vec<f64>,
    /// `θ̂ − θ₀`.
    pub theta_err: Vec<f64>,
    pub alpha_hat: f64,
    /// `r_n (θ̂ − θ₀)` with the true α.
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    pub converged: bool,
    pub clamped: bool,
    pub iterations: usize,
    pub reason: String,
}

impl ReplicationRecord {
    fn failed(design: usize, rep: usize, seed: u64, d: &SamplingDesign, m: usize, reason: String) -> Self {
        let nan = vec![f64::NAN; m];
        Self {
            design,
            rep,
            seed,
            n: d.n,
            h: d.h,
            status: RecordStatus::Failed,
            theta_hat: nan.clone(),
            theta_err: nan.clone(),
            alpha_hat: f64::NAN,
            u: nan.clone(),
            z: nan,
            converged: false,
            clamped: false,
            iterations: 0,
            reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSummary {
    pub design: usize,
    pub n: usize,
    pub h: f64,
    /// `√n h^(1 − 1/α₀)`.
    pub rate: f64,
    pub replications: usize,
    pub failures: usize,
    pub rmse_u: Vec<f64>,
    pub rmse_err: Vec<f64>,
    /// `NaN` when fewer than [`MIN_RECORDS`] successes.
    pub ks_stat: Vec<f64>,
    pub ks_pvalue: Vec<f64>,
    pub coverage: [f64; 3],
    pub alpha_bias: f64,
    pub alpha_rmse: f64,
}

impl DesignSummary {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.replications as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub designs: Vec<DesignSummary>,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub summary: CampaignSummary,
    pub records: Vec<ReplicationRecord>,
}

fn replicate(cfg: &CampaignConfig, di: usize, rep: usize) -> ReplicationRecord {
    let d = &cfg.designs[di];
    let seed = cfg.replication_seed(di, rep);
    let m = cfg.model.drift.dim();
    match replicate_inner(cfg, d, di, rep, seed) {
        Ok(r) => r,
        Err(e) => ReplicationRecord::failed(di, rep, seed, d, m, e.to_string()),
    }
}

fn replicate_inner(
    cfg: &CampaignConfig,
    d: &SamplingDesign,
    di: usize,
    rep: usize,
    seed: u64,
) -> Result<ReplicationRecord> {
    let model = &cfg.model;
    let alpha0 = model.levy.alpha;
    let path = simulate_path(model, d, cfg.fine_factor, seed)?;
    let lite = model.lite();
    let report = estimate_path(&path, &lite, cfg.regressor, &cfg.pv, cfg.scale_mode)?;
    let theta_hat = report.solution.theta_hat.clone();
    let theta_err: Vec<f64> = theta_hat.iter().zip(&model.theta0).map(|(a, b)| a - b).collect();
    let r_true = rate(d.n, d.h, alpha0);
    let u: Vec<f64> = theta_err.iter().map(|e| r_true * e).collect();
    let z = match cfg.studentizer {
        Studentizer::Identity => u.clone(),
        Studentizer::Plugin => report.studentize(&model.theta0)?,
        Studentizer::Oracle => {
            let scales = true_scales(&path, &model.sigma);
            let cov = covariance_from_scales(&path, &theta_hat, &lite, alpha0, scales)?;
            debug_assert_eq!(cov.phi0_hat, stable_density_at_zero(alpha0)?);
            mat_vec(&inverse_sqrt(&cov.avar_hat)?, &u)
        }
    };
    if theta_hat.iter().chain(&u).chain(&z).any(|v| !v.is_finite()) || !report.index.alpha_hat.is_finite() {
        return Err(Error::invalid("estimate", "non-finite estimate"));
    }
    Ok(ReplicationRecord {
        design: di,
        rep,
        seed,
        n: d.n,
        h: d.h,
        status: RecordStatus::Ok,
        theta_hat,
        theta_err,
        alpha_hat: report.index.alpha_hat,
        u,
        z,
        converged: report.solution.converged,
        clamped: report.index.clamped,
        iterations: report.solution.iterations,
        reason: String::new(),
    })
}

/// Runs every design × replication, aggregates, and writes reports when
/// `output_dir` is set.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignRun> {
    cfg.validate()?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        let probe = dir.join(".stablelad-write-probe");
        std::fs::write(&probe, b"")?;
        std::fs::remove_file(&probe)?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..cfg.designs.len()).flat_map(|d| (0..cfg.replications).map(move |r| (d, r))).collect();
    let records: Vec<ReplicationRecord> = jobs.par_iter().map(|&(d, r)| replicate(cfg, d, r)).collect();
    let summary = summarize(&records, cfg.model.levy.alpha, cfg.model.drift.dim(), &cfg.config_hash, VERSION);
    if let Some(dir) = &cfg.output_dir {
        emit_reports(&summary, &records, cfg.model.levy.alpha, dir)?;
    }
    Ok(CampaignRun { summary, records })
}

fn rmse<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, m: usize) -> Vec<f64> {
    let rows: Vec<&Vec<f64>> = rows.collect();
    (0..m)
        .map(|i| {
            let s: f64 = rows.iter().map(|r| r[i] * r[i]).sum();
            (s / rows.len() as f64).sqrt()
        })
        .collect()
}

/// Aggregates records per design, in record order.
pub fn summarize(
    records: &[ReplicationRecord],
    alpha0: f64,
    m: usize,
    config_hash: &str,
    version: &str,
) -> CampaignSummary {
    let mut ids: Vec<usize> = records.iter().map(|r| r.design).collect();
    ids.sort_unstable();
    ids.dedup();
    let designs = ids
        .into_iter()
        .map(|id| {
            let all: Vec<&ReplicationRecord> = records.iter().filter(|r| r.design == id).collect();
            let ok: Vec<&ReplicationRecord> = all.iter().copied().filter(|r| r.status == RecordStatus::Ok).collect();
            let (n, h) = (all[0].n, all[0].h);
            let norm = if ok.len() >= MIN_RECORDS {
                let z: Vec<Vec<f64>> = ok.iter().map(|r| r.z.clone()).collect();
                normality_report(&z).ok()
            } else {
                None
            };
            let (ks_stat, ks_pvalue, coverage) = match norm {
                Some(r) => (r.ks_stat, r.ks_pvalue, r.coverage),
                None => (vec![f64::NAN; m], vec![f64::NAN; m], [f64::NAN; 3]),
            };
            let k = ok.len() as f64;
            let alpha_bias = ok.iter().map(|r| r.alpha_hat - alpha0).sum::<f64>() / k;
            let alpha_rmse = (ok.iter().map(|r| (r.alpha_hat - alpha0).powi(2)).sum::<f64>() / k).sqrt();
            DesignSummary {
                design: id,
                n,
                h,
                rate: rate(n, h, alpha0),
                replications: all.len(),
                failures: all.len() - ok.len(),
                rmse_u: rmse(ok.iter().map(|r| &r.u), m),
                rmse_err: rmse(ok.iter().map(|r| &r.theta_err), m),
                ks_stat,
                ks_pvalue,
                coverage,
                alpha_bias,
                alpha_rmse,
            }
        })
        .collect();
    CampaignSummary { designs, config_hash: config_hash.to_string(), version: version.to_string() }
}
