//! Self-weighted least absolute deviation estimation of the drift parameter.
//!
//! The objective is `L(θ) = Σ_k V(X_{k−1}) |X_k − F_h(θ; X_{k−1})|`. When
//! the regressor is affine in θ this is a weighted L1 regression, solved by
//! smoothed IRLS followed by an exact vertex descent with a subgradient
//! certificate. Other regressors use a Nelder-Mead multistart.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, median, sgn};
use crate::regressors::{self, RegressorKind};
use crate::rng;
use crate::sde_sim::{ModelLite, ObservationPath};

#[derive(Debug, Clone)]
pub struct LadProblem<'a> {
    pub path: &'a ObservationPath,
    pub model: ModelLite,
    pub regressor: RegressorKind,
}

impl<'a> LadProblem<'a> {
    pub fn new(path: &'a ObservationPath, model: ModelLite, regressor: RegressorKind) -> Result<Self> {
        if path.values.len() < 2 {
            return Err(Error::TooShort { n: path.values.len(), min: 2 });
        }
        model.domain.validate()?;
        model.weight.validate()?;
        if model.domain.dim() != model.drift.dim() {
            return Err(Error::invalid("model.theta_lo", "domain dimension differs from the drift's"));
        }
        regressor.check_pairing(&model.drift)?;
        Ok(Self { path, model, regressor })
    }

    pub fn dim(&self) -> usize {
        self.model.drift.dim()
    }

    pub fn h(&self) -> f64 {
        self.path.h()
    }

    #[inline]
    fn residual(&self, theta: &[f64], k: usize) -> f64 {
        let x = self.path.values[k - 1];
        self.path.values[k] - regressors::value_only(self.regressor, &self.model.drift, theta, x, self.path.h())
    }

    /// Objective without the domain check.
    pub(crate) fn objective_unchecked(&self, theta: &[f64]) -> f64 {
        let v = &self.path.values;
        compensated_sum((1..v.len()).map(|k| self.model.weight.eval(v[k - 1]) * self.residual(theta, k).abs()))
    }
}

/// `Σ_k V(X_{k−1}) |X_k − F_h(θ; X_{k−1})|`.
pub fn lad_objective(problem: &LadProblem<'_>, theta: &[f64]) -> Result<f64> {
    if !problem.model.domain.contains(theta) {
        return Err(Error::invalid("theta", format!("{theta:?} lies outside the parameter domain")));
    }
    Ok(problem.objective_unchecked(theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    ConvexL1,
    NelderMead,
    GridRefine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadSolution {
    pub theta_hat: Vec<f64>,
    pub objective_value: f64,
    pub solver: SolverTag,
    pub iterations: usize,
    pub converged: bool,
    /// θ̂ within 1e−6 of the domain boundary.
    pub at_boundary: bool,
    /// Distance from 0 to the subdifferential, in units of the largest
    /// single-observation gradient (affine solver only; `NaN` otherwise).
    pub certificate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Random starts added to the domain center for Nelder-Mead.
    pub random_starts: usize,
    pub seed: u64,
    pub max_nm_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { random_starts: 4, seed: 0x5eed, max_nm_iterations: 4000 }
    }
}

pub fn solve_lad(problem: &LadProblem<'_>) -> Result<LadSolution> {
    solve_lad_with(problem, &SolverOptions::default())
}

pub fn solve_lad_with(problem: &LadProblem<'_>, opts: &SolverOptions) -> Result<LadSolution> {
    let mut sol = if problem.regressor.is_affine(&problem.model.drift) {
        let design = AffineDesign::build(problem);
        let fit = weighted_l1(&design)?;
        if problem.model.domain.contains(&fit.theta) {
            LadSolution {
                objective_value: problem.objective_unchecked(&fit.theta),
                theta_hat: fit.theta,
                solver: SolverTag::ConvexL1,
                iterations: fit.iterations,
                converged: fit.certificate <= 1e-6 * design.rows() as f64,
                at_boundary: false,
                certificate: fit.certificate,
            }
        } else {
            let start = problem.model.domain.clamp(&fit.theta);
            let mut s = multistart(problem, opts, Some(start))?;
            s.certificate = f64::NAN;
            s
        }
    } else if problem.dim() == 1 {
        grid_refine(problem)?
    } else {
        let warm = euler_surrogate(problem);
        multistart(problem, opts, warm)?
    };
    sol.at_boundary = problem.model.domain.boundary_distance(&sol.theta_hat) < 1e-6;
    Ok(sol)
}

/// Affine Euler fit used to warm-start the non-affine solvers.
fn euler_surrogate(problem: &LadProblem<'_>) -> Option<Vec<f64>> {
    if !problem.model.drift.is_linear_in_theta() {
        return None;
    }
    let sur = LadProblem { regressor: RegressorKind::Euler, ..problem.clone() };
    let design = AffineDesign::build(&sur);
    weighted_l1(&design).ok().map(|f| problem.model.domain.clamp(&f.theta))
}

/// `y_k ≈ g_kᵀθ` with weights `w_k` (zero-weight rows dropped).
struct AffineDesign {
    y: Vec<f64>,
    g: Vec<Vec<f64>>,
    w: Vec<f64>,
    m: usize,
}

impl AffineDesign {
    fn build(problem: &LadProblem<'_>) -> Self {
        let m = problem.dim();
        let h = problem.h();
        let v = &problem.path.values;
        let zero = vec![0.0; m];
        let mut y = Vec::with_capacity(v.len() - 1);
        let mut g = Vec::with_capacity(v.len() - 1);
        let mut w = Vec::with_capacity(v.len() - 1);
        for k in 1..v.len() {
            let wk = problem.model.weight.eval(v[k - 1]);
            if wk <= 0.0 {
                continue;
            }
            let mut gk = vec![0.0; m];
            problem.model.drift.grad_theta(&zero, v[k - 1], &mut gk);
            gk.iter_mut().for_each(|e| *e *= h);
            y.push(v[k] - v[k - 1]);
            g.push(gk);
            w.push(wk);
        }
        Self { y, g, w, m }
    }

    fn rows(&self) -> usize {
        self.y.len()
    }

    fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        self.y.iter().zip(&self.g).map(|(y, g)| y - dot(g, theta)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct L1Fit {
    theta: Vec<f64>,
    iterations: usize,
    certificate: f64,
}

fn weighted_least_squares(d: &AffineDesign, extra: &[f64]) -> Option<Vec<f64>> {
    let m = d.m;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for k in 0..d.rows() {
        let c = d.w[k] * extra[k];
        for i in 0..m {
            b[i] += c * d.g[k][i] * d.y[k];
            for j in 0..m {
                a[(i, j)] += c * d.g[k][i] * d.g[k][j];
            }
        }
    }
    a.cholesky().map(|ch| ch.solve(&b).iter().copied().collect())
}

/// Weighted L1 regression: IRLS with ε-continuation, then vertex descent.
fn weighted_l1(d: &AffineDesign) -> Result<L1Fit> {
    let m = d.m;
    let n = d.rows();
    if n < m {
        return Err(Error::invalid("path", format!("need at least {m} informative observations, got {n}")));
    }
    let ones = vec![1.0; n];
    let mut theta = weighted_least_squares(d, &ones).ok_or(Error::Identifiability { cond: f64::INFINITY })?;
    let abs_r: Vec<f64> = d.residuals(&theta).iter().map(|r| r.abs()).collect();
    let mut scale = median(&abs_r);
    if !(scale > 0.0) {
        scale = abs_r.iter().cloned().fold(0.0, f64::max);
    }
    let mut iterations = 0;
    if scale > 0.0 {
        let mut eps = 1e-2;
        while eps >= 1e-10 * 0.999 {
            for _ in 0..30 {
                iterations += 1;
                let r = d.residuals(&theta);
                let extra: Vec<f64> = r.iter().map(|r| 1.0 / r.abs().max(eps * scale)).collect();
                let Some(next) = weighted_least_squares(d, &extra) else { break };
                let step = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let size = next.iter().map(|a| a.abs()).fold(1.0, f64::max);
                theta = next;
                if step <= 1e-12 * size {
                    break;
                }
            }
            eps *= 0.1;
        }
    }
    let (theta, steps, certificate) = vertex_descent(d, theta);
    Ok(L1Fit { theta, iterations: iterations + steps, certificate })
}

fn solve_square(rows: &[&[f64]], rhs: &[f64]) -> Option<DVector<f64>> {
    let m = rhs.len();
    let a = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
    let lu = a.lu();
    let x = lu.solve(&DVector::from_column_slice(rhs))?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Picks `m` rows with the smallest residuals whose gradients are linearly
/// independent.
fn initial_basis(d: &AffineDesign, r: &[f64]) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = (0..d.rows()).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()));
    let mut basis: Vec<usize> = Vec::with_capacity(d.m);
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for &k in &order {
        let mut v = d.g[k].clone();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for q in &ortho {
            let c = dot(q, &v);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 * norm0 {
            v.iter_mut().for_each(|a| *a /= norm);
            ortho.push(v);
            basis.push(k);
            if basis.len() == d.m {
                return Some(basis);
            }
        }
    }
    None
}

/// Exact descent over vertices of the weighted L1 objective.
///
/// Returns `(θ, steps, certificate)`.
fn vertex_descent(d: &AffineDesign, start: Vec<f64>) -> (Vec<f64>, usize, f64) {
    let m = d.m;
    let n = d.rows();
    let gmax = (0..n).map(|k| d.w[k] * d.g[k].iter().map(|x| x.abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let r0 = d.residuals(&start);
    let Some(mut basis) = initial_basis(d, &r0) else {
        return (start, 0, f64::INFINITY);
    };
    let solve_vertex = |basis: &[usize]| -> Option<Vec<f64>> {
        let rows: Vec<&[f64]> = basis.iter().map(|&k| d.g[k].as_slice()).collect();
        let rhs: Vec<f64> = basis.iter().map(|&k| d.y[k]).collect();
        solve_square(&rows, &rhs).map(|x| x.iter().copied().collect())
    };
    let Some(mut theta) = solve_vertex(&basis) else {
        return (start, 0, f64::INFINITY);
    };
    let objective = |theta: &[f64]| compensated_sum((0..n).map(|k| d.w[k] * (d.y[k] - dot(&d.g[k], theta)).abs()));
    let start_obj = objective(&start);
    let mut obj = objective(&theta);
    let mut steps = 0;
    let mut certificate = f64::INFINITY;
    let max_steps = 50 * n + 100;
    while steps < max_steps {
        steps += 1;
        let r = d.residuals(&theta);
        let in_basis = |k: usize| basis.contains(&k);
        // c = Σ_{k∉B} w_k sgn(r_k) g_k; optimality needs G_Bᵀ u = −c with |u_k| ≤ w_k.
        let mut c = vec![0.0; m];
        for k in 0..n {
            if in_basis(k) {
                continue;
            }
            let s = d.w[k] * sgn(r[k]);
            c.iter_mut().zip(&d.g[k]).for_each(|(a, b)| *a += s * b);
        }
        // Columns of G_B are g_k, so solve (G_B) u = −c with G_B[i][j] = g_{B_j}[i].
        let gt: Vec<Vec<f64>> = (0..m).map(|i| basis.iter().map(|&k| d.g[k][i]).collect()).collect();
        let gt_rows: Vec<&[f64]> = gt.iter().map(Vec::as_slice).collect();
        let neg_c: Vec<f64> = c.iter().map(|x| -x).collect();
        let Some(u) = solve_square(&gt_rows, &neg_c) else { break };
        let s: Vec<f64> = basis.iter().zip(u.iter()).map(|(&k, u)| u / d.w[k]).collect();
        // Distance from 0 to the subdifferential with u clipped to the box.
        let mut resid = c.clone();
        for (j, &k) in basis.iter().enumerate() {
            let uc = s[j].clamp(-1.0, 1.0) * d.w[k];
            resid.iter_mut().zip(&d.g[k]).for_each(|(a, b)| *a += uc * b);
        }
        certificate = resid.iter().map(|x| x.abs()).fold(0.0, f64::max) / gmax.max(f64::MIN_POSITIVE);
        let (jmax, smax) =
            s.iter().enumerate().map(|(j, v)| (j, v.abs())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if smax <= 1.0 + 1e-9 {
            break;
        }
        // Leave basis element j along the edge keeping the others at zero.
        let sigma = -u[jmax].signum();
        let mut e = vec![0.0; m];
        e[jmax] = sigma;
        let basis_rows: Vec<&[f64]> = basis.iter().map(|&k| d.g[k].as_slice()).collect();
        let Some(dir) = solve_square(&basis_rows, &e) else { break };
        let dir: Vec<f64> = dir.iter().copied().collect();
        // Exact line search: weighted median of the breakpoints t_k = r_k/a_k.
        let mut pts: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
        for k in 0..n {
            let a = dot(&d.g[k], &dir);
            if a != 0.0 && (k == basis[jmax] || !in_basis(k)) {
                pts.push((r[k] / a, d.w[k] * a.abs(), k));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let mut acc = 0.0;
        let mut pick = None;
        for p in &pts {
            acc += p.1;
            if acc >= 0.5 * total {
                pick = Some(*p);
                break;
            }
        }
        let Some((t, _, kin)) = pick else { break };
        if t <= 0.0 || kin == basis[jmax] {
            break;
        }
        let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
        let mut new_basis = basis.clone();
        new_basis[jmax] = kin;
        let cand = solve_vertex(&new_basis).unwrap_or(cand);
        let cand_obj = objective(&cand);
        if !(cand_obj < obj) {
            break;
        }
        basis = new_basis;
        theta = cand;
        obj = cand_obj;
    }
    if obj > start_obj {
        return (start, steps, certificate);
    }
    (theta, steps, certificate)
}

struct NmResult {
    theta: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Box-projected objective with a distance penalty outside Θ.
fn penalized(problem: &LadProblem<'_>, theta: &[f64]) -> f64 {
    let dom = &problem.model.domain;
    let dist = dom.outside_distance(theta);
    if dist == 0.0 {
        problem.objective_unchecked(theta)
    } else {
        let f = problem.objective_unchecked(&dom.clamp(theta));
        f + dist * (1.0 + f.abs())
    }
}

fn nelder_mead(problem: &LadProblem<'_>, start: &[f64], step: &[f64], max_iter: usize) -> NmResult {
    let m = start.len();
    let mf = m as f64;
    let (ar, ag, ac, ash) = (1.0, 1.0 + 2.0 / mf, 0.75 - 1.0 / (2.0 * mf), 1.0 - 1.0 / mf);
    let f = |x: &[f64]| {
        let v = penalized(problem, x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..m {
        let mut x = start.to_vec();
        x[i] += step[i];
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut it = 0;
    let mut converged = false;
    while it < max_iter {
        it += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[m].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let scale = simplex[0].0.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if size <= 1e-11 * scale && (worst - best).abs() <= 1e-13 * (1.0 + best.abs()) {
            converged = true;
            break;
        }
        if size <= 1e-14 * scale {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; m];
        for (x, _) in &simplex[..m] {
            centroid.iter_mut().zip(x).for_each(|(c, v)| *c += v / mf);
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[m].0).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(ar);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(ag);
            let fe = f(&xe);
            simplex[m] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[m - 1].1 {
            simplex[m] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(ac);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-ac);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[m] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    x.iter_mut().zip(&x0).for_each(|(v, b)| *v = b + ash * (*v - b));
                    *fx = f(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (theta, value) = simplex.swap_remove(0);
    NmResult { theta, value, iterations: it, converged }
}

/// Golden-section search of a unimodal `g` on `[a, b]`.
fn golden<G: FnMut(f64) -> f64>(mut g: G, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = g(c);
    let mut fd = g(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = g(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Coordinate-wise golden-section polish around `theta`.
fn polish(problem: &LadProblem<'_>, mut theta: Vec<f64>, mut value: f64, radius: f64) -> (Vec<f64>, f64, usize) {
    let dom = &problem.model.domain;
    let mut sweeps = 0;
    for _ in 0..20 {
        sweeps += 1;
        let before = value;
        for i in 0..theta.len() {
            let r = radius * (1.0 + theta[i].abs());
            let lo = (theta[i] - r).max(dom.lo[i]);
            let hi = (theta[i] + r).min(dom.hi[i]);
            let tol = 1e-13 * (1.0 + theta[i].abs());
            let mut probe = theta.clone();
            let (t, v) = golden(
                |t| {
                    probe[i] = t;
                    problem.objective_unchecked(&probe)
                },
                lo,
                hi,
                tol,
            );
            if v < value {
                theta[i] = t;
                value = v;
            }
        }
        if !(value < before - 1e-15 * before.abs()) {
            break;
        }
    }
    (theta, value, sweeps)
}

fn multistart(problem: &LadProblem<'_>, opts: &SolverOptions, warm: Option<Vec<f64>>) -> Result<LadSolution> {
    let dom = &problem.model.domain;
    let widths = dom.widths();
    let mut rng = rng::rng(rng::derive_seed(opts.seed, &[rng::tag::MULTISTART]));
    let mut starts: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let wide: Vec<f64> = widths.iter().map(|w| 0.05 * w).collect();
    if let Some(w) = warm {
        let narrow: Vec<f64> = widths.iter().map(|w| 1e-3 * w).collect();
        starts.push((w, narrow));
    }
    starts.push((dom.center(), wide.clone()));
    for _ in 0..opts.random_starts {
        let x: Vec<f64> = dom.lo.iter().zip(&dom.hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect();
        starts.push((x, wide.clone()));
    }
    let results: Vec<NmResult> = starts
        .par_iter()
        .map(|(x, step)| {
            let first = nelder_mead(problem, x, step, opts.max_nm_iterations);
            // Restart once from the optimum with a fresh small simplex.
            let small: Vec<f64> = step.iter().map(|s| 1e-3 * s).collect();
            let second = nelder_mead(problem, &first.theta, &small, opts.max_nm_iterations);
            let iterations = first.iterations + second.iterations;
            if second.value <= first.value {
                NmResult { iterations, ..second }
            } else {
                NmResult { iterations, ..first }
            }
        })
        .collect();
    let best = results
        .into_iter()
        .filter(|r| r.value.is_finite())
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .ok_or(Error::SolverFailed)?;
    let theta = dom.clamp(&best.theta);
    let value = problem.objective_unchecked(&theta);
    let (theta, value, sweeps) = polish(problem, theta, value, 1e-4);
    if !value.is_finite() {
        return Err(Error::SolverFailed);
    }
    Ok(LadSolution {
        theta_hat: theta,
        objective_value: value,
        solver: SolverTag::NelderMead,
        iterations: best.iterations + sweeps,
        converged: best.converged,
        at_boundary: false,
        certificate: f64::NAN,
    })
}

fn grid_refine(problem: &LadProblem<'_>) -> Result<LadSolution> {
    let dom = &problem.model.domain;
    let (lo, hi) = (dom.lo[0], dom.hi[0]);
    let k = 400;
    let step = (hi - lo) / k as f64;
    let (mut best_t, mut best_v) = (lo, f64::INFINITY);
    for i in 0..=k {
        let t = lo + step * i as f64;
        let v = problem.objective_unchecked(&[t]);
        if v < best_v {
            best_t = t;
            best_v = v;
        }
    }
    if !best_v.is_finite() {
        return Err(Error::SolverFailed);
    }
    let a = (best_t - step).max(lo);
    let b = (best_t + step).min(hi);
    let (t, v) = golden(|t| problem.objective_unchecked(&[t]), a, b, 1e-13 * (1.0 + best_t.abs()));
    let (theta, value) = if v <= best_v { (t, v) } else { (best_t, best_v) };
    Ok(LadSolution {
        theta_hat: vec![theta],
        objective_value: value,
        solver: SolverTag::GridRefine,
        iterations: k + 1,
        converged: true,
        at_boundary: false,
        certificate: f64::NAN,
    })
}

/// `q(x, v)`: `(2v − 2x)1{x ∈ [0, v)}` for `v ≥ 0`, `(2x − 2v)1{x ∈ (v, 0]}` for `v < 0`.
pub fn q_function(x: f64, v: f64) -> f64 {
    if v >= 0.0 {
        if 0.0 <= x && x < v {
            2.0 * v - 2.0 * x
        } else {
            0.0
        }
    } else if v < x && x <= 0.0 {
        2.0 * x - 2.0 * v
    } else {
        0.0
    }
}

/// `|x − v| − |x| − (−v sgn x + q(x, v))`; zero up to rounding for `x ≠ 0`.
pub fn q_identity_check(x: f64, v: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::invalid("x", "the identity is stated for x != 0"));
    }
    Ok((x - v).abs() - x.abs() - (-v * sgn(x) + q_function(x, v)))
}

/// `∫_{−1}^{1} q(z, v) dz`.
pub fn q_integral(v: f64) -> f64 {
    let a = v.abs();
    if a <= 1.0 {
        v * v
    } else {
        2.0 * a - 1.0
    }
}

/// The normalized residuals `ζ_k` at θ₀ and the regressor differences `κ_k(θ)`.
#[derive(Debug, Clone)]
pub struct QDecomposition<'p> {
    problem: LadProblem<'p>,
    theta0: Vec<f64>,
    alpha: f64,
    pub zeta: Vec<f64>,
    f0: Vec<f64>,
}

pub fn decompose<'p>(problem: &LadProblem<'p>, theta0: &[f64], alpha_for_scaling: f64) -> Result<QDecomposition<'p>> {
    if !(alpha_for_scaling > 0.0 && alpha_for_scaling < 2.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 2)"));
    }
    if theta0.len() != problem.dim() {
        return Err(Error::invalid("theta0", format!("expected {} coordinates", problem.dim())));
    }
    let v = &problem.path.values;
    let h = problem.h();
    let norm = h.powf(-1.0 / alpha_for_scaling);
    let mut zeta = Vec::with_capacity(v.len() - 1);
    let mut f0 = Vec::with_capacity(v.len() - 1);
    for k in 1..v.len() {
        let f = regressors::value_only(problem.regressor, &problem.model.drift, theta0, v[k - 1], h);
        f0.push(f);
        zeta.push(norm * (v[k] - f) * problem.model.weight.eval(v[k - 1]));
    }
    Ok(QDecomposition { problem: problem.clone(), theta0: theta0.to_vec(), alpha: alpha_for_scaling, zeta, f0 })
}

impl QDecomposition<'_> {
    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    /// `r_n = √n h^(1 − 1/α)`.
    pub fn rate(&self) -> f64 {
        let n = self.zeta.len() as f64;
        n.sqrt() * self.problem.h().powf(1.0 - 1.0 / self.alpha)
    }

    /// `κ_k(θ) = h^(−1/α)(F_h(θ; X_{k−1}) − F_h(θ₀; X_{k−1}))V(X_{k−1})`.
    pub fn kappa(&self, theta: &[f64]) -> Vec<f64> {
        let v = &self.problem.path.values;
        let h = self.problem.h();
        let norm = h.powf(-1.0 / self.alpha);
        (1..v.len())
            .map(|k| {
                let f = regressors::value_only(self.problem.regressor, &self.problem.model.drift, theta, v[k - 1], h);
                norm * (f - self.f0[k - 1]) * self.problem.model.weight.eval(v[k - 1])
            })
            .collect()
    }

    /// `H_n(θ) = r_n^(−2) Σ (|ζ_k − κ_k(θ)| − |ζ_k|)`.
    pub fn contrast(&self, theta: &[f64]) -> f64 {
        let kappa = self.kappa(theta);
        let r2 = self.rate().powi(2);
        compensated_sum(self.zeta.iter().zip(&kappa).map(|(z, k)| (z - k).abs() - z.abs())) / r2
    }

    /// The linear and q-parts of `H_n`: `(−r_n^(−2) Σ κ_k sgn ζ_k, r_n^(−2) Σ q(ζ_k, κ_k))`.
    pub fn split(&self, theta: &[f64]) -> (f64, f64) {
        let kappa = self.kappa(theta);
        let r2 = self.rate().powi(2);
        let lin = compensated_sum(self.zeta.iter().zip(&kappa).map(|(z, k)| -k * sgn(*z))) / r2;
        let quad = compensated_sum(self.zeta.iter().zip(&kappa).map(|(z, k)| q_function(*z, *k))) / r2;
        (lin, quad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde_sim::{DriftFamily, Provenance, SamplingDesign, ThetaDomain, WeightFn};

    fn path(values: Vec<f64>, h: f64) -> ObservationPath {
        let n = values.len() - 1;
        let design = SamplingDesign::fixed_t(n, n as f64 * h);
        ObservationPath::new(design, values, Provenance::Ingested).unwrap()
    }

    fn lite(weight: WeightFn) -> ModelLite {
        ModelLite {
            drift: DriftFamily::Linear,
            weight,
            domain: ThetaDomain::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap(),
        }
    }

    #[test]
    fn hand_objective() {
        let p = path(vec![0.0, 1.0, 0.0], 1.0);
        let prob = LadProblem::new(&p, lite(WeightFn::one()), RegressorKind::Euler).unwrap();
        assert_eq!(lad_objective(&prob, &[0.0, 0.0]).unwrap(), 2.0);
        assert!(lad_objective(&prob, &[6.0, 0.0]).is_err());
    }

    #[test]
    fn perfect_fit_and_zero_weight() {
        let p = path(vec![0.5, 0.5 + 0.1 * (1.0 - 0.5)], 0.1);
        let prob = LadProblem::new(&p, lite(WeightFn::one()), RegressorKind::Euler).unwrap();
        assert_eq!(lad_objective(&prob, &[1.0, -1.0]).unwrap(), 0.0);
        let prob = LadProblem::new(&p, lite(WeightFn::one().scaled(0.0)), RegressorKind::Euler).unwrap();
        assert_eq!(lad_objective(&prob, &[3.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn q_examples() {
        assert_eq!(q_function(0.5, 1.0), 1.0);
        assert_eq!(q_function(2.0, 1.0), 0.0);
        assert_eq!(q_function(-0.5, -1.0), 1.0);
        assert_eq!(q_identity_check(3.0, 1.0).unwrap(), 0.0);
        assert_eq!(q_identity_check(0.2, 1.0).unwrap(), 0.0);
        assert!(q_identity_check(0.0, 1.0).is_err());
        assert_eq!(q_integral(0.5), 0.25);
        assert_eq!(q_integral(2.0), 3.0);
        assert_eq!(q_integral(0.0), 0.0);
    }

    #[test]
    fn weighted_median_regression_by_hand() {
        // Intercept-only through the drift: y_k = h θ₁ + noise, θ₂ x with x ≡ 0.
        let ys = [0.0, 0.3, 0.1, 0.7, 0.2, 0.9];
        let mut v = vec![0.0];
        for y in ys {
            v.push(y);
            v.push(0.0);
        }
        // Odd steps go 0 → y, even steps y → 0; use only the objective here.
        let p = path(v, 1.0);
        let prob = LadProblem::new(&p, lite(WeightFn::one()), RegressorKind::Euler).unwrap();
        let sol = solve_lad(&prob).unwrap();
        assert_eq!(sol.solver, SolverTag::ConvexL1);
        assert!(sol.converged, "certificate {}", sol.certificate);
        let f = |t: &[f64]| lad_objective(&prob, t).unwrap();
        for dt in [[1e-4, 0.0], [-1e-4, 0.0], [0.0, 1e-4], [0.0, -1e-4]] {
            let t = [sol.theta_hat[0] + dt[0], sol.theta_hat[1] + dt[1]];
            assert!(f(&t) >= sol.objective_value - 1e-12);
        }
    }

    #[test]
    fn grid_refine_scalar() {
        let drift = DriftFamily::Custom(std::sync::Arc::new(crate::sde_sim::CustomDrift {
            dim: 1,
            holder_eta: 1.0,
            linear_in_theta: false,
            value: Box::new(|t: &[f64], x: f64| t[0] * t[0] * x),
            grad: Box::new(|t: &[f64], x: f64, g: &mut [f64]| g[0] = 2.0 * t[0] * x),
            dx: None,
        }));
        let mut v = vec![1.0];
        for k in 0..50 {
            let x: f64 = v[k];
            v.push(x + 0.01 * 0.25 * x + if k % 3 == 0 { 1e-4 } else { -1e-4 });
        }
        let p = path(v, 0.01);
        let model =
            ModelLite { drift, weight: WeightFn::one(), domain: ThetaDomain::new(vec![0.0], vec![2.0]).unwrap() };
        let prob = LadProblem::new(&p, model, RegressorKind::Euler).unwrap();
        let sol = solve_lad(&prob).unwrap();
        assert_eq!(sol.solver, SolverTag::GridRefine);
        assert!((sol.theta_hat[0] - 0.5).abs() < 0.05);
    }
}
