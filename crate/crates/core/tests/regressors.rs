use proptest::prelude::*;

use stablelad::regressors::{ode_flow_oracle, verify_regressor_order};
use stablelad::{regressor, DriftFamily, RegressorKind};

const BERN: DriftFamily = DriftFamily::Bernoulli { kappa: 0.5 };

fn fd_check(kind: RegressorKind, drift: &DriftFamily, theta: [f64; 2], x: f64, h: f64) {
    let g = regressor(kind, drift, &theta, x, h).unwrap().grad_theta;
    for i in 0..2 {
        let e = 1e-5 * (1.0 + theta[i].abs());
        let mut tp = theta;
        let mut tm = theta;
        tp[i] += e;
        tm[i] -= e;
        let fp = regressor(kind, drift, &tp, x, h).unwrap().value;
        let fm = regressor(kind, drift, &tm, x, h).unwrap().value;
        let fd = (fp - fm) / (2.0 * e);
        let scale = g[i].abs().max(1e-3 * h);
        assert!((fd - g[i]).abs() / scale < 1e-6, "{kind:?} θ={theta:?} x={x} h={h} i={i}: fd {fd} vs {}", g[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn linear_gradients_match_central_differences(
        t1 in -2.0..2.0f64, t2 in -2.0..2.0f64, x in -3.0..3.0f64, h in 1e-3..0.5f64,
    ) {
        for kind in [RegressorKind::Euler, RegressorKind::ImprovedEuler, RegressorKind::ExactLinear] {
            fd_check(kind, &DriftFamily::Linear, [t1, t2], x, h);
        }
    }

    #[test]
    fn bernoulli_gradients_match_central_differences(
        t1 in 0.0..1.0f64, t2 in -2.0..-0.1f64, x in 0.5..3.0f64, h in 1e-3..0.1f64,
    ) {
        fd_check(RegressorKind::Euler, &BERN, [t1, t2], x, h);
        fd_check(RegressorKind::ExactBernoulli { kappa: 0.5 }, &BERN, [t1, t2], x, h);
    }

    #[test]
    fn euler_remainder_is_zero(t1 in -5.0..5.0f64, t2 in -5.0..5.0f64, x in -10.0..10.0f64, h in 1e-4..1.0f64) {
        let f = regressor(RegressorKind::Euler, &DriftFamily::Linear, &[t1, t2], x, h).unwrap().value;
        prop_assert_eq!(f, x + h * (t1 + t2 * x));
    }
}

#[test]
fn closed_form_values() {
    let f = regressor(RegressorKind::Euler, &DriftFamily::Linear, &[1.0, -1.0], 0.0, 0.1).unwrap();
    assert!((f.value - 0.1).abs() < 1e-15);
    let f = regressor(RegressorKind::ExactLinear, &DriftFamily::Linear, &[1.0, -1.0], 0.0, 1.0).unwrap();
    assert!((f.value - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    for x in [-3.0, 0.0, 0.7, 25.0] {
        let f = regressor(RegressorKind::ExactLinear, &DriftFamily::Linear, &[0.4, -2.0], x, 1e-12).unwrap();
        assert!((f.value - x).abs() < 1e-10 * (1.0 + f64::abs(x)));
    }
}

#[test]
fn oracle_matches_closed_forms() {
    let tol = 1e-12;
    let o = ode_flow_oracle(&DriftFamily::Linear, &[0.5, 0.3], 1.0, 1.0, tol).unwrap();
    let c = regressor(RegressorKind::ExactLinear, &DriftFamily::Linear, &[0.5, 0.3], 1.0, 1.0).unwrap().value;
    assert!((o - c).abs() < 10.0 * tol, "{o} {c}");
    let o = ode_flow_oracle(&BERN, &[1.0, -1.0], 1.0, 0.5, tol).unwrap();
    let c = regressor(RegressorKind::ExactBernoulli { kappa: 0.5 }, &BERN, &[1.0, -1.0], 1.0, 0.5).unwrap().value;
    assert!((o - c).abs() < 10.0 * tol, "{o} {c}");
    assert_eq!(ode_flow_oracle(&DriftFamily::Linear, &[0.0, 0.0], 2.5, 1.0, tol).unwrap(), 2.5);
}

#[test]
fn empirical_orders() {
    let grid: Vec<f64> = (0..8).map(|i| 0.2 / 2f64.powi(i)).collect();
    let theta = [0.5, -0.8];
    let e = verify_regressor_order(RegressorKind::Euler, &DriftFamily::Linear, &theta, 1.0, &grid).unwrap();
    assert!((1.8..=2.2).contains(&e.slope), "euler slope {}", e.slope);
    let ie = verify_regressor_order(RegressorKind::ImprovedEuler, &DriftFamily::Linear, &theta, 1.0, &grid).unwrap();
    assert!((2.7..=3.3).contains(&ie.slope), "improved slope {}", ie.slope);
    let ex = verify_regressor_order(RegressorKind::ExactLinear, &DriftFamily::Linear, &theta, 1.0, &grid).unwrap();
    assert!(ex.max_error < 10.0 * ex.oracle_tol, "exact error {}", ex.max_error);
}

#[test]
fn gradient_envelope_is_linear_in_h() {
    // sup |∇F_h| / (h (1 + |x|^p)) should not blow up as h shrinks or grows within (0, 1].
    for kind in [RegressorKind::Euler, RegressorKind::ImprovedEuler, RegressorKind::ExactLinear] {
        let p = kind.weight_exponent() as i32;
        let ratio = |h: f64| {
            let mut worst = 0.0f64;
            for i in 0..41 {
                let x = -4.0 + 0.2 * i as f64;
                let g = regressor(kind, &DriftFamily::Linear, &[0.5, -1.0], x, h).unwrap().grad_theta;
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max(norm / (h * (1.0 + x.abs().powi(p))));
            }
            worst
        };
        let (small, big) = (ratio(1e-4), ratio(0.5));
        assert!(big < 4.0 * small && small < 4.0 * big, "{kind:?}: {small} {big}");
    }
}
