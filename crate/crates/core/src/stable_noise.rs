//! Driving noise: symmetric α-stable principal part plus a low-activity
//! jump nuisance, and closed-form stable-law constants.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Open01, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, BLOCK};
use crate::special::{ln_gamma, normal_cdf};

/// Jump-size law of one side of a compound Poisson nuisance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum JumpLaw {
    Point { at: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl JumpLaw {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            JumpLaw::Point { at } => at,
            JumpLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            JumpLaw::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }

    /// `∫_{|u|≤1} u P(du)` for this law.
    fn truncated_mean(&self) -> f64 {
        match *self {
            JumpLaw::Point { at } => {
                if at.abs() <= 1.0 {
                    at
                } else {
                    0.0
                }
            }
            JumpLaw::Uniform { lo, hi } => {
                let a = lo.max(-1.0);
                let b = hi.min(1.0);
                if b <= a {
                    0.0
                } else {
                    0.5 * (b * b - a * a) / (hi - lo)
                }
            }
            JumpLaw::Normal { mean, sd } => {
                let a = (-1.0 - mean) / sd;
                let b = (1.0 - mean) / sd;
                let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
                mean * (normal_cdf(b) - normal_cdf(a)) + sd * (pdf(a) - pdf(b))
            }
        }
    }

    fn mirrored(&self) -> JumpLaw {
        match *self {
            JumpLaw::Point { at } => JumpLaw::Point { at: -at },
            JumpLaw::Uniform { lo, hi } => JumpLaw::Uniform { lo: -hi, hi: -lo },
            JumpLaw::Normal { mean, sd } => JumpLaw::Normal { mean: -mean, sd },
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let ok = match *self {
            JumpLaw::Point { at } => at.is_finite(),
            JumpLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            JumpLaw::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(field, format!("malformed jump law {self:?}")))
        }
    }
}

/// One nonnegative side of the Hahn-Jordan split: `rate · law`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSide {
    pub rate: f64,
    pub law: JumpLaw,
}

/// Nuisance part ν of the Lévy measure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NuisanceSpec {
    #[default]
    None,
    /// ν = ν⁺ − ν⁻ with both sides finite. The simulated process carries
    /// ν⁺-jumps and mirrored ν⁻-jumps, i.e. the difference measure
    /// ν⁺ + ν⁻(−·).
    CompoundPoissonSigned { plus: JumpSide, minus: JumpSide },
    /// Symmetric density `C|u|^(−β−1)` on `|u| ≤ 1`, `C|u|^(−β″−1)` beyond.
    TemperedTail { beta: f64, beta_doubleprime: f64, density_scale: f64 },
}

impl NuisanceSpec {
    /// Blumenthal-Getoor index of |ν|.
    pub fn bg_index(&self) -> f64 {
        match *self {
            NuisanceSpec::TemperedTail { beta, .. } => beta,
            _ => 0.0,
        }
    }

    /// `b = ∫_{|u|≤1} u ν(du)`, the drift separating the compensated and
    /// pure-jump forms of the exponent.
    pub fn compensation_drift(&self) -> f64 {
        match *self {
            NuisanceSpec::None | NuisanceSpec::TemperedTail { .. } => 0.0,
            NuisanceSpec::CompoundPoissonSigned { plus, minus } => {
                plus.rate * plus.law.truncated_mean() - minus.rate * minus.law.truncated_mean()
            }
        }
    }

    /// Total mass of |ν| outside `(−ε, ε)`; for the compound Poisson
    /// variants this ignores `ε`.
    pub fn mass_above(&self, eps: f64) -> f64 {
        match *self {
            NuisanceSpec::None => 0.0,
            NuisanceSpec::CompoundPoissonSigned { plus, minus } => plus.rate + minus.rate,
            NuisanceSpec::TemperedTail { beta, beta_doubleprime, density_scale } => {
                let inner = if eps >= 1.0 {
                    0.0
                } else if beta == 0.0 {
                    -eps.ln()
                } else {
                    (eps.powf(-beta) - 1.0) / beta
                };
                let outer =
                    if eps >= 1.0 { eps.powf(-beta_doubleprime) / beta_doubleprime } else { 1.0 / beta_doubleprime };
                2.0 * density_scale * (inner + outer)
            }
        }
    }

    /// Density of the TemperedTail variant (zero for the others, which are
    /// not absolutely continuous in general).
    pub fn density(&self, u: f64) -> f64 {
        match *self {
            NuisanceSpec::TemperedTail { beta, beta_doubleprime, density_scale } => {
                let a = u.abs();
                if a == 0.0 {
                    f64::INFINITY
                } else if a <= 1.0 {
                    density_scale * a.powf(-beta - 1.0)
                } else {
                    density_scale * a.powf(-beta_doubleprime - 1.0)
                }
            }
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NuisanceSpec::None => Ok(()),
            NuisanceSpec::CompoundPoissonSigned { plus, minus } => {
                for (side, name) in [(plus, "plus"), (minus, "minus")] {
                    if !(side.rate >= 0.0 && side.rate.is_finite()) {
                        return Err(Error::invalid(
                            format!("levy.nuisance.rate_{name}"),
                            "must be a finite nonnegative rate",
                        ));
                    }
                    side.law.validate(&format!("levy.nuisance.{name}"))?;
                }
                Ok(())
            }
            NuisanceSpec::TemperedTail { beta, beta_doubleprime, density_scale } => {
                if !(beta >= 0.0) {
                    return Err(Error::invalid("levy.nuisance.beta", "must be >= 0"));
                }
                if !(beta_doubleprime > 0.0) {
                    return Err(Error::invalid("levy.nuisance.beta_doubleprime", "must be > 0"));
                }
                if !(density_scale > 0.0) {
                    return Err(Error::invalid("levy.nuisance.density_scale", "must be > 0"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyConfig {
    pub alpha: f64,
    pub nuisance: NuisanceSpec,
    /// Moment order `q`; `None` declares all moments finite.
    pub tail_index_q: Option<f64>,
}

impl LevyConfig {
    pub fn stable(alpha: f64) -> Self {
        Self { alpha, nuisance: NuisanceSpec::None, tail_index_q: None }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.nuisance.validate()?;
        let beta = self.nuisance.bg_index();
        if beta >= self.alpha / 2.0 {
            return Err(Error::invalid(
                "levy.nuisance.beta",
                format!("Blumenthal-Getoor index {beta} must be below alpha/2 = {}", self.alpha / 2.0),
            ));
        }
        if let Some(q) = self.tail_index_q {
            if !(q > 0.0) {
                return Err(Error::invalid("levy.tail_index_q", "must be > 0 or \"none\""));
            }
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("{alpha} is outside (0, 2)")))
    }
}

/// One Chambers-Mallows-Stuck draw with characteristic function `exp(−|ξ|^α)`.
#[inline]
pub fn cms_draw<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let u = PI * (u - 0.5);
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        return u.tan();
    }
    let au = alpha * u;
    au.sin() / u.cos().powf(1.0 / alpha) * (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha)
}

fn fill_block(alpha: f64, seed: u64, block: usize, out: &mut [f64]) {
    let mut rng = rng::block_rng(seed, block as u64);
    for x in out.iter_mut() {
        *x = cms_draw(alpha, &mut rng);
    }
}

/// `n` i.i.d. standard symmetric α-stable draws, filled block-parallel.
pub fn sample_standard_stable(alpha: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut out = vec![0.0; n];
    out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| fill_block(alpha, seed, b, chunk));
    Ok(out)
}

/// Sequential view of the same block stream as [`sample_standard_stable`].
#[derive(Debug, Clone)]
pub struct StableStream {
    alpha: f64,
    seed: u64,
    block: usize,
    pos: usize,
    buf: Vec<f64>,
}

impl StableStream {
    pub fn new(alpha: f64, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, seed, block: 0, pos: BLOCK, buf: vec![0.0; BLOCK] })
    }

    #[inline]
    pub fn next_draw(&mut self) -> f64 {
        if self.pos == BLOCK {
            fill_block(self.alpha, self.seed, self.block, &mut self.buf);
            self.block += 1;
            self.pos = 0;
        }
        let x = self.buf[self.pos];
        self.pos += 1;
        x
    }
}

#[derive(Debug, Clone)]
struct PoissonSide {
    count: Poisson<f64>,
    sampler: JumpSampler,
}

#[derive(Debug, Clone, Copy)]
enum JumpSampler {
    Law(JumpLaw),
    Tempered { eps: f64, beta: f64, beta_dp: f64, p_inner: f64 },
}

impl JumpSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            JumpSampler::Law(law) => law.sample(rng),
            JumpSampler::Tempered { eps, beta, beta_dp, p_inner } => {
                let pick: f64 = rng.random();
                let p: f64 = rng.random();
                let mag = if pick < p_inner {
                    if beta == 0.0 {
                        eps.powf(1.0 - p)
                    } else {
                        let e = eps.powf(-beta);
                        (e - p * (e - 1.0)).powf(-1.0 / beta)
                    }
                } else {
                    (1.0 - p).powf(-1.0 / beta_dp)
                };
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }
}

/// Per-step jump sampler of the nuisance part on a step of width `h`.
#[derive(Debug, Clone)]
pub struct NuisanceStream {
    rng: ChaCha8Rng,
    plus: Option<PoissonSide>,
    minus: Option<PoissonSide>,
    drift: f64,
}

impl NuisanceStream {
    /// Returns `None` when the nuisance is absent.
    pub fn new(spec: &NuisanceSpec, alpha: f64, h: f64, seed: u64) -> Result<Option<Self>> {
        let side = |rate: f64, sampler: JumpSampler| -> Result<Option<PoissonSide>> {
            if rate * h <= 0.0 {
                return Ok(None);
            }
            let count = Poisson::new(rate * h).map_err(|e| Error::invalid("levy.nuisance", e.to_string()))?;
            Ok(Some(PoissonSide { count, sampler }))
        };
        let rng = rng::rng(rng::derive_seed(seed, &[rng::tag::NUISANCE]));
        let stream = match *spec {
            NuisanceSpec::None => return Ok(None),
            NuisanceSpec::CompoundPoissonSigned { plus, minus } => Self {
                rng,
                plus: side(plus.rate, JumpSampler::Law(plus.law))?,
                minus: side(minus.rate, JumpSampler::Law(minus.law.mirrored()))?,
                drift: 0.0,
            },
            NuisanceSpec::TemperedTail { beta, beta_doubleprime, density_scale } => {
                let eps = truncation_level(h, alpha);
                let total = spec.mass_above(eps);
                let outer = 2.0 * density_scale / beta_doubleprime;
                let sampler =
                    JumpSampler::Tempered { eps, beta, beta_dp: beta_doubleprime, p_inner: (total - outer) / total };
                // Symmetric density: the truncated small jumps have zero mean.
                Self { rng, plus: side(total, sampler)?, minus: None, drift: 0.0 }
            }
        };
        Ok(Some(stream))
    }

    pub fn next_increment(&mut self) -> f64 {
        let mut total = self.drift;
        if let Some(side) = &self.plus {
            let k = side.count.sample(&mut self.rng) as u64;
            for _ in 0..k {
                total += side.sampler.sample(&mut self.rng);
            }
        }
        if let Some(side) = &self.minus {
            let k = side.count.sample(&mut self.rng) as u64;
            for _ in 0..k {
                total += side.sampler.sample(&mut self.rng);
            }
        }
        total
    }
}

/// Jumps smaller than `h^(2/α)` are replaced by their mean.
pub fn truncation_level(h: f64, alpha: f64) -> f64 {
    h.powf(2.0 / alpha)
}

/// A source of driving-noise increments.
pub trait NoiseSource {
    fn next_increment(&mut self) -> f64;
}

/// Increments of `Z = Z^(α) + nuisance` over steps of width `h`.
#[derive(Debug, Clone)]
pub struct LevyNoise {
    scale: f64,
    stable: StableStream,
    nuisance: Option<NuisanceStream>,
}

impl LevyNoise {
    pub fn new(cfg: &LevyConfig, h: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if !(h > 0.0) {
            return Err(Error::invalid("h", "must be > 0"));
        }
        Ok(Self {
            scale: h.powf(1.0 / cfg.alpha),
            stable: StableStream::new(cfg.alpha, seed)?,
            nuisance: NuisanceStream::new(&cfg.nuisance, cfg.alpha, h, seed)?,
        })
    }

    /// Next increment split into (stable, nuisance).
    pub fn next_parts(&mut self) -> (f64, f64) {
        let s = self.scale * self.stable.next_draw();
        let j = self.nuisance.as_mut().map_or(0.0, |nu| nu.next_increment());
        (s, j)
    }
}

impl NoiseSource for LevyNoise {
    fn next_increment(&mut self) -> f64 {
        let (s, j) = self.next_parts();
        s + j
    }
}

/// All-zero increments.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn next_increment(&mut self) -> f64 {
        0.0
    }
}

/// Replays precomputed increments; panics when exhausted.
#[derive(Debug, Clone)]
pub struct ReplayNoise {
    values: Vec<f64>,
    pos: usize,
}

impl ReplayNoise {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, pos: 0 }
    }
}

impl NoiseSource for ReplayNoise {
    fn next_increment(&mut self) -> f64 {
        let x = self.values[self.pos];
        self.pos += 1;
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrementBatch {
    pub h: f64,
    pub values: Vec<f64>,
    /// `(stable, nuisance)` per increment.
    pub parts: Option<Vec<(f64, f64)>>,
}

pub fn sample_noise_increments(
    cfg: &LevyConfig,
    h: f64,
    n: usize,
    seed: u64,
    keep_parts: bool,
) -> Result<NoiseIncrementBatch> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut noise = LevyNoise::new(cfg, h, seed)?;
    if noise.nuisance.is_none() {
        let scale = noise.scale;
        let values: Vec<f64> = sample_standard_stable(cfg.alpha, n, seed)?.into_iter().map(|x| scale * x).collect();
        let parts = keep_parts.then(|| values.iter().map(|&v| (v, 0.0)).collect());
        return Ok(NoiseIncrementBatch { h, values, parts });
    }
    let mut values = Vec::with_capacity(n);
    let mut parts = keep_parts.then(|| Vec::with_capacity(n));
    for _ in 0..n {
        let (s, j) = noise.next_parts();
        values.push(s + j);
        if let Some(p) = parts.as_mut() {
            p.push((s, j));
        }
    }
    Ok(NoiseIncrementBatch { h, values, parts })
}

/// `φ_α(0) = Γ(1 + 1/α)/π`.
pub fn stable_density_at_zero(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(ln_gamma(1.0 + 1.0 / alpha).exp() / PI)
}

/// `E|S|^ρ = 2^ρ Γ((ρ+1)/2) Γ(1 − ρ/α) / (√π Γ(1 − ρ/2))`.
pub fn stable_fractional_moment(alpha: f64, rho: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(rho > 0.0 && rho < alpha) {
        return Err(Error::invalid("rho", format!("{rho} must lie in (0, alpha = {alpha})")));
    }
    let ln = rho * std::f64::consts::LN_2 + ln_gamma(0.5 * (rho + 1.0)) + ln_gamma(1.0 - rho / alpha)
        - 0.5 * PI.ln()
        - ln_gamma(1.0 - 0.5 * rho);
    Ok(ln.exp())
}
