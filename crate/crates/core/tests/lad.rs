use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stablelad::lad::{decompose, q_function, q_identity_check, q_integral, SolverTag};
use stablelad::sde_sim::Provenance;
use stablelad::{
    lad_objective, simulate_path, solve_lad, DriftFamily, LadProblem, LevyConfig, ModelLite, ModelSpec,
    ObservationPath, RegressorKind, SamplingDesign, ScaleFn, ThetaDomain, WeightFn,
};

fn lite(drift: DriftFamily, weight: WeightFn) -> ModelLite {
    ModelLite { drift, weight, domain: ThetaDomain::new(vec![-10.0, -10.0], vec![10.0, 10.0]).unwrap() }
}

fn simulated(n: usize, alpha: f64, seed: u64) -> ObservationPath {
    let m = ModelSpec {
        drift: DriftFamily::Linear,
        theta0: vec![0.5, -1.0],
        sigma: ScaleFn::Constant(1.0),
        weight: WeightFn::one(),
        domain: ThetaDomain::new(vec![-10.0, -10.0], vec![10.0, 10.0]).unwrap(),
        levy: LevyConfig::stable(alpha),
        dissipation_kappa: 1.0,
    };
    simulate_path(&m, &SamplingDesign::fixed_t(n, 4.0), 1, seed).unwrap()
}

fn random_path(n: usize, seed: u64) -> ObservationPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.3];
    for _ in 0..n {
        let last = *x.last().unwrap();
        x.push(0.9 * last + rng.random_range(-1.0..1.0));
    }
    ObservationPath::new(SamplingDesign::fixed_t(n, n as f64 * 0.1), x, Provenance::Ingested).unwrap()
}

#[test]
fn argmin_invariant_under_weight_scaling() {
    let path = simulated(2000, 1.5, 3);
    for weight in [WeightFn::one(), WeightFn::poly_decay(2.0)] {
        let base = solve_lad(&LadProblem::new(&path, lite(DriftFamily::Linear, weight), RegressorKind::Euler).unwrap())
            .unwrap();
        for c in [0.1, 10.0] {
            let p = LadProblem::new(&path, lite(DriftFamily::Linear, weight.scaled(c)), RegressorKind::Euler).unwrap();
            let s = solve_lad(&p).unwrap();
            for (a, b) in s.theta_hat.iter().zip(&base.theta_hat) {
                assert!((a - b).abs() < 1e-6, "factor {c}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn decomposition_vanishes_at_theta0() {
    let path = random_path(16, 1);
    let p = LadProblem::new(&path, lite(DriftFamily::Linear, WeightFn::one()), RegressorKind::Euler).unwrap();
    let d = decompose(&p, &[0.2, -0.4], 1.5).unwrap();
    assert!(d.kappa(&[0.2, -0.4]).iter().all(|k| *k == 0.0));
    assert_eq!(d.contrast(&[0.2, -0.4]), 0.0);
}

#[test]
fn decomposition_reconstructs_contrast() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in 0..20 {
        let path = random_path(16, 100 + s);
        for kind in [RegressorKind::Euler, RegressorKind::ExactLinear] {
            let p = LadProblem::new(&path, lite(DriftFamily::Linear, WeightFn::poly_decay(1.0)), kind).unwrap();
            let d = decompose(&p, &[0.1, -0.5], 1.3).unwrap();
            let theta = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            // H_n from the raw objective, independently of the decomposition.
            let raw = (lad_objective(&p, &theta).unwrap() - lad_objective(&p, &[0.1, -0.5]).unwrap())
                * path.h().powf(-1.0 / 1.3)
                / d.rate().powi(2);
            let (lin, quad) = d.split(&theta);
            let h = d.contrast(&theta);
            assert!((lin + quad - h).abs() <= 1e-10 * h.abs().max(1e-12), "{lin} + {quad} vs {h}");
            assert!((raw - h).abs() <= 1e-10 * h.abs().max(1.0), "{raw} vs {h}");
        }
    }
}

#[test]
fn q_lipschitz_in_v() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100_000 {
        let z: f64 = rng.random_range(-3.0..3.0);
        let v: f64 = rng.random_range(-3.0..3.0);
        let w: f64 = rng.random_range(-3.0..3.0);
        assert!((q_function(z, v) - q_function(z, w)).abs() <= 2.0 * (v - w).abs() + 1e-15);
    }
}

#[test]
fn objective_midpoint_convex_in_affine_case() {
    let path = simulated(500, 1.2, 4);
    let p = LadProblem::new(&path, lite(DriftFamily::Linear, WeightFn::poly_decay(1.0)), RegressorKind::Euler).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let a = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let b = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let (la, lb, lm) =
            (lad_objective(&p, &a).unwrap(), lad_objective(&p, &b).unwrap(), lad_objective(&p, &mid).unwrap());
        assert!(lm <= (la + lb) / 2.0 + 1e-10 * (la + lb));
    }
}

#[test]
fn nonaffine_regressor_close_to_euler_estimate() {
    let path = simulated(4000, 1.5, 12);
    let lin = lite(DriftFamily::Linear, WeightFn::one());
    let e = solve_lad(&LadProblem::new(&path, lin.clone(), RegressorKind::Euler).unwrap()).unwrap();
    let x = solve_lad(&LadProblem::new(&path, lin, RegressorKind::ExactLinear).unwrap()).unwrap();
    assert_eq!(e.solver, SolverTag::ConvexL1);
    assert_eq!(x.solver, SolverTag::NelderMead);
    assert!(x.converged);
    // The regressors differ by O(h²) per step, so the estimates agree to O(h) relative to their spread.
    for (a, b) in e.theta_hat.iter().zip(&x.theta_hat) {
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
    }
}

#[test]
fn q_integral_examples() {
    assert_eq!(q_integral(0.5), 0.25);
    assert_eq!(q_integral(2.0), 3.0);
    assert_eq!(q_integral(0.0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn q_nonnegative_and_bounded(x in -10.0..10.0f64, v in -10.0..10.0f64) {
        let q = q_function(x, v);
        prop_assert!(q >= 0.0);
        prop_assert!(q <= 2.0 * v.abs());
    }

    #[test]
    fn q_identity_holds(x in -10.0..10.0f64, v in -10.0..10.0f64) {
        prop_assume!(x != 0.0);
        prop_assert!(q_identity_check(x, v).unwrap().abs() < 1e-14 * (1.0 + x.abs() + v.abs()));
    }

    #[test]
    fn q_integral_lower_bounds(v in -50.0..50.0f64, big_q in 1.0..20.0f64) {
        let i = q_integral(v);
        prop_assert!(i >= 0.5 * v.abs().min(v * v));
        if v.abs() <= big_q {
            let c = f64::min(1.0, (2.0 * big_q - 1.0) / (big_q * big_q));
            prop_assert!(i >= c * v * v * (1.0 - 1e-12));
        }
    }
}
