//! Model specification and Euler-Maruyama simulation of
//! `dX = a(θ; X) dt + σ(X₋) dZ` on a fine grid, subsampled to `t_k = k h`.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stable_noise::{LevyConfig, LevyNoise, NoiseSource};

pub type DriftFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
pub type GradFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// User-supplied drift `a(θ; x)` with its θ-gradient.
pub struct CustomDrift {
    pub dim: usize,
    /// Declared Hölder exponent η of `x ↦ a(θ; x)`.
    pub holder_eta: f64,
    /// Whether `a` is linear in θ; then `∇_θ a(θ; x)` must not depend on θ.
    pub linear_in_theta: bool,
    pub value: Box<DriftFn>,
    pub grad: Box<GradFn>,
    /// `∂ₓa` and its θ-gradient, needed by the improved Euler regressor.
    pub dx: Option<(Box<DriftFn>, Box<GradFn>)>,
}

impl fmt::Debug for CustomDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDrift")
            .field("dim", &self.dim)
            .field("holder_eta", &self.holder_eta)
            .field("linear_in_theta", &self.linear_in_theta)
            .field("has_dx", &self.dx.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum DriftFamily {
    /// `θ₁ + θ₂ x`.
    Linear,
    /// `θ₁ x^⟨κ⟩ + θ₂ x` with `x^⟨κ⟩ = |x|^κ sgn x`.
    Bernoulli {
        kappa: f64,
    },
    Custom(Arc<CustomDrift>),
}

#[inline]
fn signed_pow(x: f64, k: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(k).copysign(x)
    }
}

impl DriftFamily {
    pub fn dim(&self) -> usize {
        match self {
            DriftFamily::Linear | DriftFamily::Bernoulli { .. } => 2,
            DriftFamily::Custom(c) => c.dim,
        }
    }

    pub fn holder_eta(&self) -> f64 {
        match self {
            DriftFamily::Linear => 1.0,
            DriftFamily::Bernoulli { kappa } => *kappa,
            DriftFamily::Custom(c) => c.holder_eta,
        }
    }

    pub fn is_linear_in_theta(&self) -> bool {
        match self {
            DriftFamily::Linear | DriftFamily::Bernoulli { .. } => true,
            DriftFamily::Custom(c) => c.linear_in_theta,
        }
    }

    #[inline]
    pub fn value(&self, theta: &[f64], x: f64) -> f64 {
        match self {
            DriftFamily::Linear => theta[0] + theta[1] * x,
            DriftFamily::Bernoulli { kappa } => theta[0] * signed_pow(x, *kappa) + theta[1] * x,
            DriftFamily::Custom(c) => (c.value)(theta, x),
        }
    }

    /// Writes `∇_θ a(θ; x)` into `out`.
    #[inline]
    pub fn grad_theta(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        match self {
            DriftFamily::Linear => {
                out[0] = 1.0;
                out[1] = x;
            }
            DriftFamily::Bernoulli { kappa } => {
                out[0] = signed_pow(x, *kappa);
                out[1] = x;
            }
            DriftFamily::Custom(c) => (c.grad)(theta, x, out),
        }
    }

    pub fn has_dx(&self) -> bool {
        match self {
            DriftFamily::Linear => true,
            // x^⟨κ⟩ is not differentiable at the origin.
            DriftFamily::Bernoulli { .. } => false,
            DriftFamily::Custom(c) => c.dx.is_some(),
        }
    }

    /// `∂ₓa(θ; x)` and its θ-gradient, when available.
    pub fn dx(&self, theta: &[f64], x: f64, grad_out: &mut [f64]) -> Option<f64> {
        match self {
            DriftFamily::Linear => {
                grad_out[0] = 0.0;
                grad_out[1] = 1.0;
                Some(theta[1])
            }
            DriftFamily::Bernoulli { .. } => None,
            DriftFamily::Custom(c) => c.dx.as_ref().map(|(v, g)| {
                g(theta, x, grad_out);
                v(theta, x)
            }),
        }
    }

    pub fn validate(&self, alpha: f64) -> Result<()> {
        if let DriftFamily::Bernoulli { kappa } = self {
            if !(*kappa > 0.0 && *kappa < 1.0) {
                return Err(Error::invalid("model.kappa", "Bernoulli exponent must lie in (0, 1)"));
            }
        }
        let eta = self.holder_eta();
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid("model.drift", "Hölder exponent must lie in (0, 1]"));
        }
        if alpha + eta <= 1.0 {
            return Err(Error::invalid(
                "model.drift",
                format!("balance condition alpha + eta > 1 fails ({alpha} + {eta})"),
            ));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub enum ScaleFn {
    Constant(f64),
    /// `base + amplitude · sin x`.
    Sine {
        base: f64,
        amplitude: f64,
    },
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lower: f64,
        upper: f64,
    },
}

impl fmt::Debug for ScaleFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleFn::Constant(c) => write!(f, "Constant({c})"),
            ScaleFn::Sine { base, amplitude } => write!(f, "Sine {{ base: {base}, amplitude: {amplitude} }}"),
            ScaleFn::Custom { lower, upper, .. } => write!(f, "Custom {{ lower: {lower}, upper: {upper} }}"),
        }
    }
}

impl ScaleFn {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScaleFn::Constant(c) => *c,
            ScaleFn::Sine { base, amplitude } => base + amplitude * x.sin(),
            ScaleFn::Custom { f, .. } => f(x),
        }
    }

    /// Declared `(σ_min, σ_max)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ScaleFn::Constant(c) => (*c, *c),
            ScaleFn::Sine { base, amplitude } => (base - amplitude.abs(), base + amplitude.abs()),
            ScaleFn::Custom { lower, upper, .. } => (*lower, *upper),
        }
    }

    /// Checks the declared bounds and samples σ on `[−100, 100]` against them.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid("model.sigma", format!("bounds ({lo}, {hi}) must satisfy 0 < lo <= hi < inf")));
        }
        let tol = 1e-12 * hi;
        for i in 0..=20_000 {
            let x = -100.0 + 0.01 * i as f64;
            let s = self.eval(x);
            if !(s >= lo - tol && s <= hi + tol) {
                return Err(Error::invalid("model.sigma", format!("sigma({x}) = {s} violates declared bounds")));
            }
        }
        Ok(())
    }
}

/// `V(x) = factor · (1 + |x|)^(−power)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFn {
    pub factor: f64,
    pub power: f64,
}

impl WeightFn {
    pub fn one() -> Self {
        Self { factor: 1.0, power: 0.0 }
    }

    pub fn poly_decay(power: f64) -> Self {
        Self { factor: 1.0, power }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self { factor: self.factor * c, ..self }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.power == 0.0 {
            self.factor
        } else {
            self.factor * (1.0 + x.abs()).powf(-self.power)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.factor >= 0.0 && self.factor.is_finite() && self.power >= 0.0 && self.power.is_finite()) {
            return Err(Error::invalid("model.weight_power", "weight must be bounded and nonnegative"));
        }
        Ok(())
    }
}

/// Axis-aligned box Θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ThetaDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = Self { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(Error::invalid("model.theta_lo", "bounds must be nonempty and of equal length"));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::invalid("model.theta_lo", "the domain must be a bounded box with lo < hi"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (l, h))| l <= t && t <= h)
    }

    pub fn is_interior(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (l, h))| l < t && t < h)
    }

    /// Distance to the nearest face (negative outside).
    pub fn boundary_distance(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (l, h))| (t - l).min(h - t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn clamp(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(self.lo.iter().zip(&self.hi)).map(|(t, (l, h))| t.clamp(*l, *h)).collect()
    }

    /// Euclidean distance from `theta` to the box.
    pub fn outside_distance(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (l, h))| {
                let d = (l - t).max(t - h).max(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub drift: DriftFamily,
    pub theta0: Vec<f64>,
    pub sigma: ScaleFn,
    pub weight: WeightFn,
    pub domain: ThetaDomain,
    pub levy: LevyConfig,
    /// κ of the drift-dissipation probe `a(θ₀, x) sgn x / |x|^κ`.
    pub dissipation_kappa: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.levy.validate()?;
        self.drift.validate(self.levy.alpha)?;
        self.sigma.validate()?;
        self.weight.validate()?;
        self.domain.validate()?;
        if self.theta0.len() != self.drift.dim() || self.domain.dim() != self.drift.dim() {
            return Err(Error::invalid("model.theta0", format!("expected {} coordinates", self.drift.dim())));
        }
        if !self.domain.is_interior(&self.theta0) {
            return Err(Error::invalid("model.theta0", "must lie in the interior of the parameter domain"));
        }
        Ok(())
    }

    /// Drift, weight and domain: what estimation needs.
    pub fn lite(&self) -> ModelLite {
        ModelLite { drift: self.drift.clone(), weight: self.weight, domain: self.domain.clone() }
    }

    /// Probes `a(θ₀, x) sgn x / |x|^κ` at `|x| ∈ {1e2, 1e3, 1e4}`; returns a
    /// warning when any probe is nonnegative.
    pub fn dissipation_warning(&self) -> Option<String> {
        let bad: Vec<f64> = [1e2, 1e3, 1e4, -1e2, -1e3, -1e4]
            .into_iter()
            .filter(|&x: &f64| {
                let v = self.drift.value(&self.theta0, x) * x.signum() / x.abs().powf(self.dissipation_kappa);
                !(v < 0.0)
            })
            .collect();
        (!bad.is_empty())
            .then(|| format!("drift dissipation check failed at x = {bad:?}; the ergodic regime may not hold"))
    }
}

/// The part of a model the estimators use.
#[derive(Debug, Clone)]
pub struct ModelLite {
    pub drift: DriftFamily,
    pub weight: WeightFn,
    pub domain: ThetaDomain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    FixedT { t: f64 },
    Ergodic,
}

/// Horizon regime of an ingested path; `FixedT` takes `T = n·h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonKind {
    FixedT,
    Ergodic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingDesign {
    pub n: usize,
    pub h: f64,
    pub horizon: Horizon,
    pub delta: f64,
    pub x0: f64,
    /// Ergodic burn-in length in time units (at least 1000 coarse steps are used).
    pub burn_in_time: f64,
}

pub const DEFAULT_DELTA: f64 = 0.75;
const T_MIN: f64 = 1e-9;

impl SamplingDesign {
    /// `h = T/n`.
    pub fn fixed_t(n: usize, t: f64) -> Self {
        Self { n, h: t / n as f64, horizon: Horizon::FixedT { t }, delta: DEFAULT_DELTA, x0: 0.0, burn_in_time: 10.0 }
    }

    /// `h = n^(−3/4)`.
    pub fn ergodic(n: usize) -> Self {
        Self::ergodic_with_h(n, (n as f64).powf(-0.75))
    }

    pub fn ergodic_with_h(n: usize, h: f64) -> Self {
        Self { n, h, horizon: Horizon::Ergodic, delta: DEFAULT_DELTA, x0: 0.0, burn_in_time: 10.0 }
    }

    pub fn horizon_length(&self) -> f64 {
        self.n as f64 * self.h
    }

    /// Validates the design; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.n < 1 {
            return Err(Error::invalid("design.n", "must be at least 1"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid("design.h", "must be a finite positive step"));
        }
        if let Horizon::FixedT { t } = self.horizon {
            if (self.horizon_length() - t).abs() >= 1e-12 * t.max(1.0) {
                return Err(Error::invalid(
                    "design.T",
                    format!("n*h = {} differs from T = {t}", self.horizon_length()),
                ));
            }
        }
        if self.horizon_length() < T_MIN {
            return Err(Error::invalid("design.h", "n*h must be bounded away from zero"));
        }
        if self.delta <= 0.5 {
            return Err(Error::invalid("design.delta", "must exceed 1/2"));
        }
        if !self.x0.is_finite() {
            return Err(Error::invalid("design.x0", "must be finite"));
        }
        let mut warnings = Vec::new();
        let stab = self.n as f64 * self.h.powf(2.0 * self.delta);
        if stab > 0.5 {
            warnings.push(format!("n*h^(2 delta) = {stab:.3} exceeds 0.5; the step may be too coarse"));
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Simulated { fine_factor: usize, seed: u64, warnings: Vec<String> },
    Ingested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    pub design: SamplingDesign,
    /// `X` at `t_0, …, t_n`.
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl ObservationPath {
    pub fn new(design: SamplingDesign, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if values.len() != design.n + 1 {
            return Err(Error::invalid("path", format!("expected {} values, got {}", design.n + 1, values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i });
        }
        Ok(Self { design, values, provenance })
    }

    pub fn n(&self) -> usize {
        self.design.n
    }

    pub fn h(&self) -> f64 {
        self.design.h
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.design.h
    }

    /// Same design, values multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    /// Writes `t,x` CSV with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x")?;
        for (k, x) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.time(k), x)?;
        }
        Ok(())
    }
}

const EXPLOSION: f64 = 1e100;

/// Fine-grid Euler-Maruyama with `σ` at the left endpoint.
pub fn simulate_path(
    model: &ModelSpec,
    design: &SamplingDesign,
    fine_factor: usize,
    seed: u64,
) -> Result<ObservationPath> {
    model.validate()?;
    let mut warnings = design.validate()?;
    if fine_factor < 1 {
        return Err(Error::invalid("fine_factor", "must be at least 1"));
    }
    if design.horizon == Horizon::Ergodic {
        warnings.extend(model.dissipation_warning());
    }
    let mut noise = LevyNoise::new(&model.levy, design.h / fine_factor as f64, seed)?;
    let values = run_euler(model, design, fine_factor, &mut noise)?;
    ObservationPath::new(*design, values, Provenance::Simulated { fine_factor, seed, warnings })
}

/// As [`simulate_path`] but with an explicit noise source delivering
/// increments over fine steps of width `h/fine_factor`.
pub fn simulate_path_with_noise<N: NoiseSource>(
    model: &ModelSpec,
    design: &SamplingDesign,
    fine_factor: usize,
    noise: &mut N,
) -> Result<ObservationPath> {
    model.validate()?;
    let warnings = design.validate()?;
    if fine_factor < 1 {
        return Err(Error::invalid("fine_factor", "must be at least 1"));
    }
    let values = run_euler(model, design, fine_factor, noise)?;
    ObservationPath::new(*design, values, Provenance::Simulated { fine_factor, seed: 0, warnings })
}

/// Number of discarded coarse steps before recording an ergodic path.
pub fn burn_in_steps(design: &SamplingDesign) -> usize {
    match design.horizon {
        Horizon::FixedT { .. } => 0,
        Horizon::Ergodic => 1000usize.max((design.burn_in_time / design.h).ceil() as usize),
    }
}

fn run_euler<N: NoiseSource>(model: &ModelSpec, design: &SamplingDesign, ff: usize, noise: &mut N) -> Result<Vec<f64>> {
    let hf = design.h / ff as f64;
    let theta = &model.theta0;
    let mut x = design.x0;
    let mut step = |x: &mut f64| -> bool {
        for _ in 0..ff {
            let dz = noise.next_increment();
            *x += model.drift.value(theta, *x) * hf + model.sigma.eval(*x) * dz;
        }
        x.is_finite() && x.abs() < EXPLOSION
    };
    for _ in 0..burn_in_steps(design) {
        if !step(&mut x) {
            return Err(Error::PathExplosion { index: 0 });
        }
    }
    let mut values = Vec::with_capacity(design.n + 1);
    values.push(x);
    for k in 1..=design.n {
        if !step(&mut x) {
            return Err(Error::PathExplosion { index: k });
        }
        values.push(x);
    }
    Ok(values)
}

/// Reads a path from a `t,x` or single-column `x` CSV with header.
///
/// `h` is required for single-column files and, if given, must agree with
/// the spacing of two-column files.
pub fn ingest_path(file: &Path, h: Option<f64>, horizon: HorizonKind) -> Result<ObservationPath> {
    let f = std::fs::File::open(file)?;
    read_path(f, h, horizon)
}

pub fn read_path<R: Read>(reader: R, h: Option<f64>, horizon: HorizonKind) -> Result<ObservationPath> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().ok_or(Error::TooShort { n: 0, min: 8 })??;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    let two = match cols.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["t", "x"] => true,
        ["x"] => false,
        _ => return Err(Error::Parse { row: 1, msg: format!("expected header `t,x` or `x`, got `{header}`") }),
    };
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse =
            |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::Parse { row, msg: format!("`{s}`: {e}") }) };
        let (t, x) = match (two, fields.as_slice()) {
            (true, [t, x]) => (Some(parse(t)?), parse(x)?),
            (false, [x]) => (None, parse(x)?),
            _ => return Err(Error::Parse { row, msg: "wrong number of fields".into() }),
        };
        if !x.is_finite() || t.is_some_and(|t| !t.is_finite()) {
            return Err(Error::NonFinite { row });
        }
        if let Some(t) = t {
            ts.push(t);
        }
        xs.push(x);
    }
    if xs.len() < 8 {
        return Err(Error::TooShort { n: xs.len(), min: 8 });
    }
    let n = xs.len() - 1;
    let step = if two {
        let mean = (ts[n] - ts[0]) / n as f64;
        if !(mean > 0.0) {
            return Err(Error::NonEquispaced { row: 3 });
        }
        for k in 1..=n {
            let d = ts[k] - ts[k - 1];
            if ((d - mean) / mean).abs() >= 1e-9 {
                return Err(Error::NonEquispaced { row: k + 2 });
            }
        }
        if let Some(h) = h {
            if ((h - mean) / mean).abs() >= 1e-9 {
                return Err(Error::invalid("h", format!("given step {h} disagrees with file spacing {mean}")));
            }
        }
        mean
    } else {
        h.ok_or_else(|| Error::invalid("h", "a single-column path needs an explicit step"))?
    };
    if !(step > 0.0) {
        return Err(Error::invalid("h", "must be > 0"));
    }
    let horizon = match horizon {
        HorizonKind::Ergodic => Horizon::Ergodic,
        HorizonKind::FixedT => Horizon::FixedT { t: n as f64 * step },
    };
    let design = SamplingDesign { n, h: step, horizon, delta: DEFAULT_DELTA, x0: xs[0], burn_in_time: 0.0 };
    ObservationPath::new(design, xs, Provenance::Ingested)
}
