//! End-to-end estimation on one observed path.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::index_scale::{
    estimate_alpha, estimate_constant_scale, estimate_covariance, inverse_sqrt, CovarianceEstimate, IndexEstimate,
    PowerVariationConfig, ScaleMode,
};
use crate::lad::{solve_lad, LadProblem, LadSolution};
use crate::numeric::median;
use crate::regressors::RegressorKind;
use crate::sde_sim::{ModelLite, ObservationPath};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub solution: LadSolution,
    pub index: IndexEstimate,
    pub sigma_constant: f64,
    /// (min, median, max) of the spot scales in use.
    pub spot_summary: (f64, f64, f64),
    pub covariance: CovarianceEstimate,
    /// `√n h^(1 − 1/α̂)`.
    pub rate_hat: f64,
    /// Per-coordinate `θ̂ᵢ ± 1.96 √𝒜̂ᵢᵢ / r̂_n`.
    pub ci95: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// `√n h^(1 − 1/α)`.
pub fn rate(n: usize, h: f64, alpha: f64) -> f64 {
    (n as f64).sqrt() * h.powf(1.0 - 1.0 / alpha)
}

/// LAD fit, index and scale estimation, and the plug-in covariance.
pub fn estimate_path(
    path: &ObservationPath,
    model: &ModelLite,
    regressor: RegressorKind,
    pv: &PowerVariationConfig,
    mode: ScaleMode,
) -> Result<EstimationReport> {
    let problem = LadProblem::new(path, model.clone(), regressor)?;
    let solution = solve_lad(&problem)?;
    if solution.at_boundary {
        return Err(Error::BoundaryOptimum);
    }
    let mut warnings = Vec::new();
    if !solution.converged {
        warnings.push("LAD solver did not certify optimality".to_string());
    }
    let index = estimate_alpha(path, pv)?;
    if index.clamped {
        warnings.push(format!("alpha estimate clamped to {}", index.alpha_hat));
    }
    let sigma_constant = estimate_constant_scale(path, pv.rho, index.alpha_hat)?;
    let covariance = estimate_covariance(path, &solution.theta_hat, model, pv, index.alpha_hat, mode)?;
    let s = &covariance.spot_scales;
    let spot_summary = (
        s.iter().cloned().fold(f64::INFINITY, f64::min),
        median(s),
        s.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let rate_hat = rate(path.n(), path.h(), index.alpha_hat);
    let ci95 = solution
        .theta_hat
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let half = 1.96 * covariance.avar_hat[(i, i)].sqrt() / rate_hat;
            (t - half, t + half)
        })
        .collect();
    Ok(EstimationReport { solution, index, sigma_constant, spot_summary, covariance, rate_hat, ci95, warnings })
}

impl EstimationReport {
    /// `𝒜̂^(−1/2) r̂_n (θ̂ − θ₀)`.
    pub fn studentize(&self, theta0: &[f64]) -> Result<Vec<f64>> {
        let root = inverse_sqrt(&self.covariance.avar_hat)?;
        let u: Vec<f64> = self.solution.theta_hat.iter().zip(theta0).map(|(a, b)| self.rate_hat * (a - b)).collect();
        Ok(mat_vec(&root, &u))
    }

    /// Key-value CSV (`quantity,value`).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,value\n");
        let m = self.solution.theta_hat.len();
        for i in 0..m {
            let _ = writeln!(s, "theta_hat_{},{}", i + 1, self.solution.theta_hat[i]);
        }
        for i in 0..m {
            let _ = writeln!(s, "ci95_lo_{},{}", i + 1, self.ci95[i].0);
            let _ = writeln!(s, "ci95_hi_{},{}", i + 1, self.ci95[i].1);
        }
        let _ = writeln!(s, "objective,{}", self.solution.objective_value);
        let _ = writeln!(s, "alpha_hat,{}", self.index.alpha_hat);
        let _ = writeln!(s, "alpha_clamped,{}", self.index.clamped);
        let _ = writeln!(s, "sigma_constant,{}", self.sigma_constant);
        let _ = writeln!(s, "spot_min,{}", self.spot_summary.0);
        let _ = writeln!(s, "spot_median,{}", self.spot_summary.1);
        let _ = writeln!(s, "spot_max,{}", self.spot_summary.2);
        let _ = writeln!(s, "phi0_hat,{}", self.covariance.phi0_hat);
        let _ = writeln!(s, "rate_hat,{}", self.rate_hat);
        let _ = writeln!(s, "sigma_condition,{}", self.covariance.sigma_condition);
        for (name, mat) in [
            ("gamma_hat", &self.covariance.gamma_hat),
            ("sigma_mat_hat", &self.covariance.sigma_mat_hat),
            ("avar_hat", &self.covariance.avar_hat),
        ] {
            for i in 0..m {
                for j in 0..m {
                    let _ = writeln!(s, "{name}_{}{},{}", i + 1, j + 1, mat[(i, j)]);
                }
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "theta_hat      {:?}", self.solution.theta_hat);
        for (i, (lo, hi)) in self.ci95.iter().enumerate() {
            let _ = writeln!(s, "95% CI theta_{} [{lo:.6}, {hi:.6}]", i + 1);
        }
        let _ = writeln!(
            s,
            "solver         {:?} ({} iterations, converged: {})",
            self.solution.solver, self.solution.iterations, self.solution.converged
        );
        let _ = writeln!(
            s,
            "alpha_hat      {:.6}{}",
            self.index.alpha_hat,
            if self.index.clamped { " (clamped)" } else { "" }
        );
        let _ = writeln!(s, "sigma_hat      {:.6}", self.sigma_constant);
        let _ = writeln!(
            s,
            "spot scales    min {:.4}  median {:.4}  max {:.4}",
            self.spot_summary.0, self.spot_summary.1, self.spot_summary.2
        );
        let _ = writeln!(s, "rate_hat       {:.6}", self.rate_hat);
        let _ = writeln!(s, "Gamma_hat      {}", fmt_matrix(&self.covariance.gamma_hat));
        let _ = writeln!(s, "Sigma_hat      {}", fmt_matrix(&self.covariance.sigma_mat_hat));
        let _ = writeln!(s, "avar_hat       {}", fmt_matrix(&self.covariance.avar_hat));
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

pub(crate) fn mat_vec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum()).collect()
}

fn fmt_matrix(a: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..a.nrows())
        .map(|i| {
            let r: Vec<String> = (0..a.ncols()).map(|j| format!("{:.6e}", a[(i, j)])).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}
