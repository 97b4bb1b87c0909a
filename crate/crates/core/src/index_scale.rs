//! Stability-index and scale estimation from power variations of second-
//! and third-order differences, and the plug-in asymptotic covariance.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::sde_sim::{Horizon, ModelLite, ObservationPath, ScaleFn};
use crate::stable_noise::{stable_density_at_zero, stable_fractional_moment, LevyConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerVariationConfig {
    pub rho: f64,
    /// Clamping bounds for α̂.
    pub alpha_bounds: (f64, f64),
    /// Rolling-window length; `None` uses `⌈h^(−c)⌉`.
    pub window: Option<usize>,
    /// Window exponent `c`.
    pub window_exponent: f64,
    /// Spot-scale floor parameter `c_σ` (floor is `c_σ/2`); `None` uses
    /// one tenth of the constant-scale estimate.
    pub c_sigma: Option<f64>,
}

impl Default for PowerVariationConfig {
    fn default() -> Self {
        Self { rho: 0.25, alpha_bounds: (0.55, 1.95), window: None, window_exponent: 0.5, c_sigma: None }
    }
}

impl PowerVariationConfig {
    pub fn with_rho(rho: f64) -> Self {
        Self { rho, ..Self::default() }
    }

    pub fn window_len(&self, h: f64) -> usize {
        self.window.unwrap_or_else(|| h.powf(-self.window_exponent).ceil() as usize).max(1)
    }

    /// Checks ρ against the moment caps implied by the noise declaration
    /// and the window against `l h < 0.2`, `l ≥ h^(−c)`.
    pub fn validate(&self, levy: &LevyConfig, horizon: Horizon, h: f64) -> Result<()> {
        let (lo, hi) = self.alpha_bounds;
        if !(0.5 < lo && lo < hi && hi < 2.0) {
            return Err(Error::invalid("estimate.alpha_lo", "alpha bounds must satisfy 1/2 < lo < hi < 2"));
        }
        let cap = rho_cap(levy, horizon);
        if !(self.rho > 0.0 && self.rho < cap) {
            return Err(Error::invalid("estimate.rho", format!("{} must lie in (0, {cap})", self.rho)));
        }
        let l = self.window_len(h);
        if l as f64 * h >= 0.2 {
            return Err(Error::invalid("estimate.window", format!("window {l} too long for h = {h} (l*h >= 0.2)")));
        }
        if (l as f64) < h.powf(-self.window_exponent) * (1.0 - 1e-12) {
            return Err(Error::invalid("estimate.window", format!("window {l} shorter than h^(-c)")));
        }
        Ok(())
    }
}

/// Upper bound for ρ: `(1 if β = 0 else β) ∧ α ∧ 1`, and `∧ q/2` for ergodic designs.
pub fn rho_cap(levy: &LevyConfig, horizon: Horizon) -> f64 {
    let beta = levy.nuisance.bg_index();
    let mut cap = (if beta == 0.0 { 1.0 } else { beta }).min(levy.alpha).min(1.0);
    if horizon == Horizon::Ergodic {
        if let Some(q) = levy.tail_index_q {
            cap = cap.min(q / 2.0);
        }
    }
    cap
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexEstimate {
    pub alpha_hat: f64,
    /// `H₁` normalized at α̂.
    pub h1: f64,
    /// `H₂` normalized at α̂.
    pub h2: f64,
    /// `(n−1) Σ|Δ³|^ρ / ((n−3) Σ|Δ²|^ρ)`.
    pub ratio: f64,
    pub clamped: bool,
}

/// `Δ²_k X = X_k + X_{k−2} − 2X_{k−1}`, `k = 2..n`.
pub fn second_differences(path: &ObservationPath) -> Result<Vec<f64>> {
    let v = &path.values;
    if path.n() < 2 {
        return Err(Error::TooShort { n: path.n(), min: 2 });
    }
    Ok((2..v.len()).map(|k| v[k] + v[k - 2] - 2.0 * v[k - 1]).collect())
}

/// `Δ²_k X − Δ²_{k−2} X`, `k = 4..n`.
pub fn third_differences(path: &ObservationPath) -> Result<Vec<f64>> {
    if path.n() < 4 {
        return Err(Error::TooShort { n: path.n(), min: 4 });
    }
    let d2 = second_differences(path)?;
    Ok((2..d2.len()).map(|i| d2[i] - d2[i - 2]).collect())
}

fn abs_pow_sum(xs: &[f64], rho: f64, scale: f64) -> f64 {
    compensated_sum(xs.iter().map(|x| (scale * x).abs().powf(rho)))
}

/// `(n−1)^(−1) Σ_{k=2}^n |(2h)^(−1/α) Δ²_k X|^ρ`.
pub fn power_variation_h1(path: &ObservationPath, rho: f64, alpha_scaling: f64) -> Result<f64> {
    let d2 = second_differences(path)?;
    Ok(abs_pow_sum(&d2, rho, 1.0) * (2.0 * path.h()).powf(-rho / alpha_scaling) / d2.len() as f64)
}

/// `(n−3)^(−1) Σ_{k=4}^n |(4h)^(−1/α) (Δ²_k X − Δ²_{k−2} X)|^ρ`.
pub fn power_variation_h2(path: &ObservationPath, rho: f64, alpha_scaling: f64) -> Result<f64> {
    let d3 = third_differences(path)?;
    Ok(abs_pow_sum(&d3, rho, 1.0) * (4.0 * path.h()).powf(-rho / alpha_scaling) / d3.len() as f64)
}

/// Power of two close to `max |x|`, so that rescaling by powers of two is exact.
fn dyadic_normalizer(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        1.0
    } else {
        2f64.powi(m.log2().floor() as i32)
    }
}

/// `α̂ = ρ log 2 / log((n−1) Σ|Δ³|^ρ / ((n−3) Σ|Δ²|^ρ))`, clamped to the bounds.
pub fn estimate_alpha(path: &ObservationPath, cfg: &PowerVariationConfig) -> Result<IndexEstimate> {
    if path.n() < 8 {
        return Err(Error::TooShort { n: path.n(), min: 8 });
    }
    let rho = cfg.rho;
    if !(rho > 0.0) {
        return Err(Error::invalid("estimate.rho", "must be > 0"));
    }
    let d2 = second_differences(path)?;
    let d3: Vec<f64> = (2..d2.len()).map(|i| d2[i] - d2[i - 2]).collect();
    let scale = 1.0 / dyadic_normalizer(&d2);
    let s2 = abs_pow_sum(&d2, rho, scale);
    let s3 = abs_pow_sum(&d3, rho, scale);
    if !(s2 > 0.0) || !(s3 > 0.0) {
        return Err(Error::ZeroPowerVariation);
    }
    let n = path.n() as f64;
    let ratio = (n - 1.0) * s3 / ((n - 3.0) * s2);
    let (lo, hi) = cfg.alpha_bounds;
    let lr = ratio.ln();
    let raw = rho * std::f64::consts::LN_2 / lr;
    let (alpha_hat, clamped) = if !(lr > 0.0) || raw > hi {
        (hi, true)
    } else if raw < lo {
        (lo, true)
    } else {
        (raw, false)
    };
    let h = path.h();
    let unscale = scale.powf(-rho);
    let h1 = s2 * unscale * (2.0 * h).powf(-rho / alpha_hat) / (n - 1.0);
    let h2 = s3 * unscale * (4.0 * h).powf(-rho / alpha_hat) / (n - 3.0);
    Ok(IndexEstimate { alpha_hat, h1, h2, ratio, clamped })
}

/// `σ̂ = (H₁(ρ)/𝔪_α̂(ρ))^(1/ρ)` with `H₁` normalized at α̂.
pub fn estimate_constant_scale(path: &ObservationPath, rho: f64, alpha_hat: f64) -> Result<f64> {
    if !(rho < alpha_hat) {
        return Err(Error::invalid("estimate.rho", format!("{rho} must be below alpha_hat = {alpha_hat}")));
    }
    let m = stable_fractional_moment(alpha_hat, rho)?;
    let h1 = power_variation_h1(path, rho, alpha_hat)?;
    if !(h1 > 0.0) {
        return Err(Error::ZeroPowerVariation);
    }
    Ok((h1 / m).powf(1.0 / rho))
}

/// Spot scales `σ̂_{k−1}`, `k = 1..n`, from the forward windows
/// `j = k+1..k+l` of second differences, floored at `c_σ/2`. Entries past
/// the last full window repeat it.
pub fn estimate_spot_scales(path: &ObservationPath, cfg: &PowerVariationConfig, alpha_hat: f64) -> Result<Vec<f64>> {
    let n = path.n();
    let l = cfg.window_len(path.h());
    if n < 3 || l >= n - 2 {
        return Err(Error::invalid(
            "estimate.window",
            format!("window {l} must be shorter than n - 2 = {}", n as i64 - 2),
        ));
    }
    let rho = cfg.rho;
    let m = stable_fractional_moment(alpha_hat, rho)?;
    let c_sigma = match cfg.c_sigma {
        Some(c) => c,
        None => 0.1 * estimate_constant_scale(path, rho, alpha_hat).unwrap_or(0.0),
    };
    let floor = 0.5 * c_sigma;
    let norm = (2.0 * path.h()).powf(-1.0 / alpha_hat);
    let d2 = second_differences(path)?;
    // prefix[i] = Σ_{j<i} |norm Δ²_{j+2}|^ρ, i.e. d2 index i ↔ k = i + 2.
    let mut prefix = Vec::with_capacity(d2.len() + 1);
    let mut acc = CompensatedSum::new();
    prefix.push(0.0);
    for d in &d2 {
        acc.add((norm * d).abs().powf(rho));
        prefix.push(acc.value());
    }
    let last_k = n - l;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let kk = k.min(last_k);
        // j = kk+1..kk+l ↔ d2 indices kk-1..kk+l-2.
        let s = (prefix[kk + l - 1] - prefix[kk - 1]) / l as f64;
        let est = (s.max(0.0) / m).powf(1.0 / rho);
        out.push(est.max(floor));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    ConstantScale,
    SpotScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub gamma_hat: DMatrix<f64>,
    pub sigma_mat_hat: DMatrix<f64>,
    pub phi0_hat: f64,
    pub avar_hat: DMatrix<f64>,
    /// Scales used for `σ̂_{k−1}`, `k = 1..n`.
    pub spot_scales: Vec<f64>,
    pub sigma_condition: f64,
}

/// `Γ̂ = n^(−1) Σ V² f`, `Σ̂ = n^(−1) Σ (V/σ̂) f` with `f = ∇_θa ∇_θaᵀ`.
pub fn estimate_covariance(
    path: &ObservationPath,
    theta_hat: &[f64],
    model: &ModelLite,
    cfg: &PowerVariationConfig,
    alpha_hat: f64,
    mode: ScaleMode,
) -> Result<CovarianceEstimate> {
    let scales = match mode {
        ScaleMode::SpotScale => estimate_spot_scales(path, cfg, alpha_hat)?,
        ScaleMode::ConstantScale => vec![estimate_constant_scale(path, cfg.rho, alpha_hat)?; path.n()],
    };
    covariance_from_scales(path, theta_hat, model, alpha_hat, scales)
}

/// Oracle scales `σ(X_{k−1})`, `k = 1..n`.
pub fn true_scales(path: &ObservationPath, sigma: &ScaleFn) -> Vec<f64> {
    path.values[..path.n()].iter().map(|&x| sigma.eval(x)).collect()
}

/// `n^(−1) Σ_k w_k f(X_{k−1}, θ)`.
pub fn weighted_gram(
    path: &ObservationPath,
    theta: &[f64],
    model: &ModelLite,
    weight: impl Fn(usize, f64) -> f64,
) -> DMatrix<f64> {
    let m = model.drift.dim();
    let n = path.n();
    let mut acc = vec![CompensatedSum::new(); m * m];
    let mut g = vec![0.0; m];
    for k in 1..=n {
        let x = path.values[k - 1];
        let w = weight(k, x);
        model.drift.grad_theta(theta, x, &mut g);
        for i in 0..m {
            for j in 0..m {
                acc[i * m + j].add(w * g[i] * g[j]);
            }
        }
    }
    DMatrix::from_fn(m, m, |i, j| acc[i * m + j].value() / n as f64)
}

pub fn covariance_from_scales(
    path: &ObservationPath,
    theta_hat: &[f64],
    model: &ModelLite,
    alpha_hat: f64,
    scales: Vec<f64>,
) -> Result<CovarianceEstimate> {
    if scales.len() != path.n() {
        return Err(Error::invalid("scales", format!("expected {} scales", path.n())));
    }
    if theta_hat.len() != model.drift.dim() {
        return Err(Error::invalid("theta_hat", format!("expected {} coordinates", model.drift.dim())));
    }
    let weight = &model.weight;
    let gamma_hat = weighted_gram(path, theta_hat, model, |_, x| weight.eval(x).powi(2));
    let sigma_mat_hat = weighted_gram(path, theta_hat, model, |k, x| weight.eval(x) / scales[k - 1]);
    let eig = SymmetricEigen::new(sigma_mat_hat.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(cond <= 1e12) {
        return Err(Error::Identifiability { cond });
    }
    let inv = eig.eigenvectors.clone()
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose();
    let phi0_hat = stable_density_at_zero(alpha_hat)?;
    let c = (2.0 * phi0_hat).powi(-2);
    let a = &inv * &gamma_hat * &inv * c;
    let avar_hat = (&a + a.transpose()) * 0.5;
    Ok(CovarianceEstimate { gamma_hat, sigma_mat_hat, phi0_hat, avar_hat, spot_scales: scales, sigma_condition: cond })
}

/// Symmetric inverse square root via eigendecomposition.
pub fn inverse_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Identifiability { cond: f64::INFINITY });
    }
    Ok(&eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt().recip()))
        * eig.eigenvectors.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde_sim::{Provenance, SamplingDesign};

    fn path(values: Vec<f64>) -> ObservationPath {
        let n = values.len() - 1;
        ObservationPath::new(SamplingDesign::fixed_t(n, 1.0), values, Provenance::Ingested).unwrap()
    }

    #[test]
    fn differences_by_hand() {
        assert_eq!(second_differences(&path(vec![0.0, 1.0, 0.0])).unwrap(), vec![-2.0]);
        let p = path(vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(third_differences(&p).unwrap(), vec![2.0]);
        let sq = path((0..10).map(|k| (k * k) as f64).collect());
        assert!(second_differences(&sq).unwrap().iter().all(|&d| d == 2.0));
        assert!(third_differences(&sq).unwrap().iter().all(|&d| d == 0.0));
        let lin = path((0..10).map(|k| 3.0 * k as f64).collect());
        assert!(second_differences(&lin).unwrap().iter().all(|&d| d == 0.0));
        assert!(third_differences(&path(vec![0.0, 1.0, 2.0])).is_err());
    }

    #[test]
    fn constant_path_is_an_error() {
        let p = path(vec![1.0; 20]);
        assert!(matches!(estimate_alpha(&p, &PowerVariationConfig::default()), Err(Error::ZeroPowerVariation)));
        assert_eq!(power_variation_h1(&p, 0.3, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn rho_caps() {
        let mut levy = LevyConfig::stable(1.5);
        assert_eq!(rho_cap(&levy, Horizon::Ergodic), 1.0);
        levy.tail_index_q = Some(0.8);
        assert_eq!(rho_cap(&levy, Horizon::Ergodic), 0.4);
        assert_eq!(rho_cap(&levy, Horizon::FixedT { t: 1.0 }), 1.0);
        levy.nuisance =
            crate::stable_noise::NuisanceSpec::TemperedTail { beta: 0.3, beta_doubleprime: 1.0, density_scale: 1.0 };
        assert_eq!(rho_cap(&levy, Horizon::FixedT { t: 1.0 }), 0.3);
    }

    #[test]
    fn floor_applies_on_flat_window() {
        let mut v: Vec<f64> = (0..200).map(|k| ((k * 7919) % 13) as f64).collect();
        for x in v.iter_mut().take(40) {
            *x = 0.0;
        }
        let p = path(v);
        let cfg = PowerVariationConfig { window: Some(10), c_sigma: Some(0.4), ..PowerVariationConfig::default() };
        let s = estimate_spot_scales(&p, &cfg, 1.5).unwrap();
        assert_eq!(s.len(), 199);
        assert_eq!(s[0], 0.2);
        assert!(s.iter().all(|&x| x >= 0.2));
    }
}
