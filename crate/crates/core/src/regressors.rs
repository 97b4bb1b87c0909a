//! One-step regressors `F_h(θ; x)` approximating the drift flow, their
//! θ-gradients, and a Runge-Kutta reference for the flow itself.

use crate::error::{Error, Result};
use crate::numeric::ols_slope;
use crate::sde_sim::DriftFamily;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressorKind {
    /// `x + h a(θ; x)`.
    Euler,
    /// `x + h a + (h²/2) a ∂ₓa`.
    ImprovedEuler,
    /// Exact flow of the linear drift.
    ExactLinear,
    /// Exact flow of the Bernoulli drift.
    ExactBernoulli { kappa: f64 },
}

impl RegressorKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegressorKind::Euler => "euler",
            RegressorKind::ImprovedEuler => "improved-euler",
            RegressorKind::ExactLinear => "exact-linear",
            RegressorKind::ExactBernoulli { .. } => "exact-bernoulli",
        }
    }

    /// Exponent `p` of the envelope `W(x) = C(1 + |x|^p)` bounding `|∇_θ F_h|/h`.
    pub fn weight_exponent(&self) -> u32 {
        match self {
            RegressorKind::Euler | RegressorKind::ExactLinear | RegressorKind::ExactBernoulli { .. } => 1,
            RegressorKind::ImprovedEuler => 2,
        }
    }

    /// Checks that the regressor can be paired with `drift`.
    pub fn check_pairing(&self, drift: &DriftFamily) -> Result<()> {
        match (self, drift) {
            (RegressorKind::Euler, _) => Ok(()),
            (RegressorKind::ImprovedEuler, d) if d.has_dx() => Ok(()),
            (RegressorKind::ImprovedEuler, _) => {
                Err(Error::invalid("estimate.regressor", "improved-euler needs a drift with a bounded x-derivative"))
            }
            (RegressorKind::ExactLinear, DriftFamily::Linear) => Ok(()),
            (RegressorKind::ExactLinear, _) => {
                Err(Error::invalid("estimate.regressor", "exact-linear pairs only with the linear drift"))
            }
            (RegressorKind::ExactBernoulli { kappa }, DriftFamily::Bernoulli { kappa: k }) => {
                if !(*kappa < 1.0) {
                    Err(Error::invalid("estimate.regressor", "exact-bernoulli needs kappa < 1"))
                } else if kappa != k {
                    Err(Error::invalid("estimate.regressor", "exact-bernoulli kappa differs from the drift's"))
                } else {
                    Ok(())
                }
            }
            (RegressorKind::ExactBernoulli { .. }, _) => {
                Err(Error::invalid("estimate.regressor", "exact-bernoulli pairs only with the Bernoulli drift"))
            }
        }
    }

    /// Whether `θ ↦ F_h(θ; x)` is affine for this drift.
    pub fn is_affine(&self, drift: &DriftFamily) -> bool {
        matches!(self, RegressorKind::Euler) && drift.is_linear_in_theta()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorEval {
    pub value: f64,
    pub grad_theta: Vec<f64>,
}

/// `ψ(y) = (e^y − 1)/y`, `ψ(0) = 1`.
pub fn psi(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        // Σ_{k=0}^{5} y^k/(k+1)!
        1.0 + y * (0.5 + y * (1.0 / 6.0 + y * (1.0 / 24.0 + y * (1.0 / 120.0 + y / 720.0))))
    } else {
        y.exp_m1() / y
    }
}

/// `ψ′(y) = Σ_{k≥1} k y^(k−1)/(k+1)!`.
pub fn psi_prime(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        0.5 + y * (1.0 / 3.0 + y * (0.125 + y * (1.0 / 30.0 + y * (5.0 / 720.0 + y / 840.0))))
    } else {
        (y * y.exp() - y.exp_m1()) / (y * y)
    }
}

/// Evaluates `F_h(θ; x)` and its θ-gradient.
pub fn regressor(kind: RegressorKind, drift: &DriftFamily, theta: &[f64], x: f64, h: f64) -> Result<RegressorEval> {
    if !(h > 0.0) {
        return Err(Error::invalid("h", "must be > 0"));
    }
    if theta.len() != drift.dim() {
        return Err(Error::invalid("theta", format!("expected {} coordinates", drift.dim())));
    }
    kind.check_pairing(drift)?;
    let mut grad = vec![0.0; drift.dim()];
    let value = eval_into(kind, drift, theta, x, h, &mut grad);
    Ok(RegressorEval { value, grad_theta: grad })
}

/// Unchecked evaluation; `grad` must have length `drift.dim()` and the
/// pairing must already be validated.
pub(crate) fn eval_into(
    kind: RegressorKind,
    drift: &DriftFamily,
    theta: &[f64],
    x: f64,
    h: f64,
    grad: &mut [f64],
) -> f64 {
    match kind {
        RegressorKind::Euler => {
            drift.grad_theta(theta, x, grad);
            grad.iter_mut().for_each(|g| *g *= h);
            x + h * drift.value(theta, x)
        }
        RegressorKind::ImprovedEuler => {
            let m = grad.len();
            let a = drift.value(theta, x);
            let mut ga = vec![0.0; m];
            let mut gax = vec![0.0; m];
            drift.grad_theta(theta, x, &mut ga);
            let ax = drift.dx(theta, x, &mut gax).expect("pairing checked");
            for i in 0..m {
                grad[i] = h * ga[i] + 0.5 * h * h * (ga[i] * ax + a * gax[i]);
            }
            x + h * a + 0.5 * h * h * a * ax
        }
        RegressorKind::ExactLinear => {
            let y = theta[1] * h;
            let e = y.exp();
            let p = psi(y);
            grad[0] = h * p;
            grad[1] = h * e * x + theta[0] * h * h * psi_prime(y);
            e * x + theta[0] * h * p
        }
        RegressorKind::ExactBernoulli { kappa } => {
            let c = 1.0 - kappa;
            let y = c * theta[1] * h;
            let e = y.exp();
            let p = psi(y);
            let ax = x.abs().powf(c);
            let a = e * ax + c * theta[0] * h * p;
            if a <= 0.0 {
                grad[0] = 0.0;
                grad[1] = 0.0;
                return 0.0;
            }
            let s = if x < 0.0 { -1.0 } else { 1.0 };
            let base = a.powf(1.0 / c - 1.0) * s;
            grad[0] = base * h * p;
            grad[1] = base * (h * e * ax + c * theta[0] * h * h * psi_prime(y));
            a.powf(1.0 / c) * s
        }
    }
}

/// Value-only fast path (pairing must already be validated).
#[inline]
pub(crate) fn value_only(kind: RegressorKind, drift: &DriftFamily, theta: &[f64], x: f64, h: f64) -> f64 {
    match kind {
        RegressorKind::Euler => x + h * drift.value(theta, x),
        RegressorKind::ExactLinear => {
            let y = theta[1] * h;
            y.exp() * x + theta[0] * h * psi(y)
        }
        RegressorKind::ExactBernoulli { kappa } => {
            let c = 1.0 - kappa;
            let y = c * theta[1] * h;
            let a = y.exp() * x.abs().powf(c) + c * theta[0] * h * psi(y);
            let s = if x < 0.0 { -1.0 } else { 1.0 };
            a.max(0.0).powf(1.0 / c) * s
        }
        RegressorKind::ImprovedEuler => {
            let mut g = vec![0.0; drift.dim()];
            let a = drift.value(theta, x);
            let ax = drift.dx(theta, x, &mut g).expect("pairing checked");
            x + h * a + 0.5 * h * h * a * ax
        }
    }
}

/// Dormand-Prince 5(4) solution of `f′ = a(θ; f)`, `f(0) = x`, at time `t`.
pub fn ode_flow_oracle(drift: &DriftFamily, theta: &[f64], x: f64, t: f64, tol: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid("t", "must lie in [0, 1]"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    if let DriftFamily::Bernoulli { .. } = drift {
        if x == 0.0 && theta[0] != 0.0 {
            return Err(Error::invalid("x", "the Bernoulli flow from x = 0 is not unique"));
        }
    }
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    let f = |y: f64| drift.value(theta, y);
    let mut s = 0.0;
    let mut y = x;
    let mut dt = (0.01f64).min(t);
    if t == 0.0 {
        return Ok(x);
    }
    let mut k = [0.0; 7];
    while s < t {
        if dt < 1e-14 * (1.0 + s) {
            return Err(Error::StepUnderflow { t: s });
        }
        dt = dt.min(t - s);
        k[0] = f(y);
        for i in 0..6 {
            let yi = y + dt * (0..=i).map(|j| A[i][j] * k[j]).sum::<f64>();
            k[i + 1] = f(yi);
        }
        let y5 = y + dt * (0..7).map(|j| B5[j] * k[j]).sum::<f64>();
        let y4 = y + dt * (0..7).map(|j| B4[j] * k[j]).sum::<f64>();
        let scale = tol * (1.0 + y.abs().max(y5.abs()));
        let err = (y5 - y4).abs() / scale;
        if err <= 1.0 {
            s += dt;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        dt *= factor;
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    /// Log-log slope over the points whose error exceeds the oracle
    /// resolution; `NaN` when fewer than two such points remain.
    pub slope: f64,
    pub points_used: usize,
    pub max_error: f64,
    pub oracle_tol: f64,
}

/// Fits the order of `|F_h − f_h|` in `h` against the Runge-Kutta oracle.
pub fn verify_regressor_order(
    kind: RegressorKind,
    drift: &DriftFamily,
    theta: &[f64],
    x: f64,
    h_grid: &[f64],
) -> Result<OrderReport> {
    kind.check_pairing(drift)?;
    let oracle_tol = 1e-14;
    let mut errors = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let f = ode_flow_oracle(drift, theta, x, h, oracle_tol)?;
        let fh = regressor(kind, drift, theta, x, h)?.value;
        errors.push((fh - f).abs());
    }
    let floor = 100.0 * oracle_tol * (1.0 + x.abs());
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        h_grid.iter().zip(&errors).filter(|(_, e)| **e > floor).map(|(h, e)| (h.ln(), e.ln())).unzip();
    let slope = if lx.len() >= 2 { ols_slope(&lx, &ly) } else { f64::NAN };
    Ok(OrderReport {
        h: h_grid.to_vec(),
        max_error: errors.iter().cloned().fold(0.0, f64::max),
        errors,
        slope,
        points_used: lx.len(),
        oracle_tol,
    })
}
