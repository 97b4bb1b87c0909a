use stablelad::experiments::ks_two_sample;
use stablelad::quadrature::integrate;
use stablelad::special::ln_gamma;
use stablelad::stable_noise::{
    sample_noise_increments, sample_standard_stable, stable_density_at_zero, stable_fractional_moment,
    truncation_level, JumpLaw, JumpSide, LevyConfig, NuisanceSpec,
};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn cauchy_median_and_characteristic_function() {
    let n = 100_000;
    let x = sample_standard_stable(1.0, n, 11).unwrap();
    let mut s = x.clone();
    s.sort_by(f64::total_cmp);
    let iqr = s[3 * n / 4] - s[n / 4];
    assert!(median(x.clone()).abs() < 3.0 * iqr / (n as f64).sqrt());
    let ecf = x.iter().map(|v| v.cos()).sum::<f64>() / n as f64;
    assert!((ecf - (-1.0f64).exp()).abs() < 3.0 / (n as f64).sqrt(), "ecf {ecf}");
}

#[test]
fn ecf_matches_at_three_frequencies() {
    let n = 50_000;
    for (i, alpha) in [0.7, 1.2, 1.8].into_iter().enumerate() {
        let x = sample_standard_stable(alpha, n, 40 + i as u64).unwrap();
        for xi in [0.5, 1.0, 2.0] {
            let ecf = x.iter().map(|v| (xi * v).cos()).sum::<f64>() / n as f64;
            let cf = (-f64::powf(xi, alpha)).exp();
            assert!((ecf - cf).abs() < 4.0 / (n as f64).sqrt(), "alpha {alpha} xi {xi}: {ecf} vs {cf}");
        }
    }
}

#[test]
fn increments_scale_like_h_to_one_over_alpha() {
    let alpha = 1.4;
    let h = 0.01;
    let a = sample_noise_increments(&LevyConfig::stable(alpha), h, 10_000, 3, false).unwrap();
    let b: Vec<f64> =
        sample_standard_stable(alpha, 10_000, 4).unwrap().into_iter().map(|x| h.powf(1.0 / alpha) * x).collect();
    let (_, p) = ks_two_sample(&a.values, &b);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn no_nuisance_parts_are_zero() {
    let b = sample_noise_increments(&LevyConfig::stable(1.5), 0.1, 1000, 1, true).unwrap();
    for (v, (s, j)) in b.values.iter().zip(b.parts.unwrap()) {
        assert_eq!(j, 0.0);
        assert_eq!(*v, s);
    }
}

#[test]
fn parts_sum_to_values() {
    let cfg = LevyConfig {
        alpha: 1.3,
        tail_index_q: None,
        nuisance: NuisanceSpec::CompoundPoissonSigned {
            plus: JumpSide { rate: 3.0, law: JumpLaw::Uniform { lo: 0.1, hi: 2.0 } },
            minus: JumpSide { rate: 1.0, law: JumpLaw::Point { at: 0.5 } },
        },
    };
    let with = sample_noise_increments(&cfg, 0.05, 5000, 9, true).unwrap();
    let without = sample_noise_increments(&cfg, 0.05, 5000, 9, false).unwrap();
    assert_eq!(with.values, without.values);
    for (v, (s, j)) in with.values.iter().zip(with.parts.unwrap()) {
        assert!((v - (s + j)).abs() <= 1e-12 * v.abs().max(1e-300));
    }
}

#[test]
fn symmetric_compound_poisson_has_zero_compensation() {
    let side = JumpSide { rate: 2.0, law: JumpLaw::Normal { mean: 0.0, sd: 0.7 } };
    let spec = NuisanceSpec::CompoundPoissonSigned { plus: side, minus: side };
    assert_eq!(spec.compensation_drift(), 0.0);
    let cfg = LevyConfig { alpha: 1.5, tail_index_q: None, nuisance: spec };
    let b = sample_noise_increments(&cfg, 0.1, 100_000, 5, true).unwrap();
    let jumps: Vec<f64> = b.parts.unwrap().into_iter().map(|p| p.1).collect();
    let n = jumps.len() as f64;
    let mean = jumps.iter().sum::<f64>() / n;
    let sd = (jumps.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 4.0 * sd / n.sqrt(), "mean {mean}");
}

#[test]
fn tempered_jump_fraction_matches_poisson_rate() {
    let (beta, bdp, c) = (0.2, 1.0, 1.0);
    let (alpha, h, n) = (1.5, 1e-3, 100_000);
    let spec = NuisanceSpec::TemperedTail { beta, beta_doubleprime: bdp, density_scale: c };
    let eps = truncation_level(h, alpha);
    // |ν|(ℝ∖(−ε,ε)) by quadrature of the density on [ε,1] and [1,∞) (u = 1/s on the tail).
    let inner = integrate(|u| spec.density(u), eps, 1.0, 1e-12);
    let outer = integrate(|s: f64| spec.density(1.0 / s) / (s * s), 1e-12, 1.0, 1e-12);
    let lambda = 2.0 * (inner + outer);
    assert!((lambda - spec.mass_above(eps)).abs() < 1e-6 * lambda);
    let cfg = LevyConfig { alpha, tail_index_q: None, nuisance: spec };
    let b = sample_noise_increments(&cfg, h, n, 17, true).unwrap();
    let hit = b.parts.unwrap().iter().filter(|p| p.1 != 0.0).count() as f64 / n as f64;
    let p = 1.0 - (-lambda * h).exp();
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hit - p).abs() < 4.0 * se, "hit {hit} expected {p}");
}

#[test]
fn density_at_zero_matches_log_gamma() {
    for alpha in [0.3, 0.5, 1.0, 1.25, 1.5, 1.99] {
        let phi = stable_density_at_zero(alpha).unwrap();
        let want = ln_gamma(1.0 + 1.0 / alpha).exp() / std::f64::consts::PI;
        assert!((phi - want).abs() <= 1e-12 * want);
    }
    assert!((stable_density_at_zero(0.5).unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-14);
    assert!((stable_density_at_zero(1.0).unwrap() - 1.0 / std::f64::consts::PI).abs() < 1e-15);
}

#[test]
fn fractional_moment_monte_carlo() {
    let n = 1_000_000;
    let x = sample_standard_stable(1.5, n, 123).unwrap();
    let y: Vec<f64> = x.iter().map(|v| v.abs().powf(0.4)).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let m = stable_fractional_moment(1.5, 0.4).unwrap();
    assert!((mean - m).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean} vs {m}");
}

#[test]
fn fractional_moment_domain() {
    assert!(stable_fractional_moment(1.2, 1.2).is_err());
    assert!(stable_fractional_moment(1.2, 0.0).is_err());
}

#[test]
fn fractional_moment_continuous_in_alpha() {
    for i in 0..=30 {
        let alpha = 0.55 + 0.045 * i as f64;
        for rho in [0.1, 0.25, 0.45] {
            let a = stable_fractional_moment(alpha, rho).unwrap();
            let b = stable_fractional_moment(alpha + 1e-6, rho).unwrap();
            assert!((a - b).abs() < 1e-4);
        }
    }
}
