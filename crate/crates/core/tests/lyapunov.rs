use std::sync::OnceLock;

use hyperdecay::compensator::{compensators_for, DeltaSchedule, MARGIN_TOL};
use hyperdecay::error::Error;
use hyperdecay::linalg::{hermitian_extremes, CMat};
use hyperdecay::lyapunov::*;
use hyperdecay::spectral::{mode_matrix, spectral_abscissa_curve, FrequencyGrid};
use hyperdecay::sysmodel::*;
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(tag: u8, m: usize) -> RelaxationSystem {
    match tag {
        1 => build_model_one(&ModelParamsI::defaults(m)).unwrap(),
        _ => build_model_two(&ModelParamsII::defaults(m)).unwrap(),
    }
}

const CASES: [(u8, usize); 4] = [(1, 6), (1, 8), (2, 6), (2, 8)];

fn certificates() -> &'static Vec<LyapunovCertificate> {
    static CERTS: OnceLock<Vec<LyapunovCertificate>> = OnceLock::new();
    CERTS.get_or_init(|| {
        let grid = FrequencyGrid::default_log();
        CASES.iter().map(|&(t, m)| pointwise_certificate(&model(t, m), &grid).unwrap()).collect()
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn lambda_profiles_match_each_model() {
    let p = |t, m| lambda_profile(if t == 1 { ModelTag::ModelI } else { ModelTag::ModelII }, m).unwrap();
    assert_eq!(p(1, 6), LambdaProfile { p2: 6, q: 4 });
    assert_eq!(p(2, 6), LambdaProfile { p2: 8, q: 6 });
    assert_eq!(p(1, 8), LambdaProfile { p2: 10, q: 6 });
    assert_eq!(p(2, 8), LambdaProfile { p2: 14, q: 10 });
    assert!(lambda_profile(ModelTag::Custom, 6).is_err());
    assert_eq!(p(1, 6).eval(1.0), 1.0 / 16.0);
}

#[test]
fn lambda_vanishes_at_both_ends() {
    for (t, m) in CASES {
        let tag = if t == 1 { ModelTag::ModelI } else { ModelTag::ModelII };
        let lam = lambda_profile(tag, m).unwrap();
        let pts: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
        for w in pts.windows(2) {
            assert!(lam.eval(w[1]) > lam.eval(w[0]), "{tag:?} m={m} not increasing at {}", w[0]);
        }
        let big = [1e2, 1e3, 1e4];
        for w in big.windows(2) {
            assert!(lam.eval(w[1]) < lam.eval(w[0]));
        }
        // Large-ξ slope is 2p − 2q, up to a correction of order q/(ξ² ln 10).
        let slope = (lam.eval(1e4).ln() - lam.eval(1e3).ln()) / 10f64.ln();
        assert!((slope - (lam.p2 - 2 * lam.q) as f64).abs() < 1e-4);
        assert!(lam.eval(1e-6) < 1e-30 && lam.eval(1e8) < 1e-15);
    }
}

#[test]
fn lyapunov_matrix_limits() {
    for (t, m) in CASES {
        let sys = model(t, m);
        let s = DeltaSchedule::geometric(0.5, hyperdecay::compensator::delta_count(sys.model, m).unwrap());
        let set = compensators_for(&sys, &s).unwrap();
        let id = CMat::identity(m, m);
        assert_eq!(lyapunov_matrix(&set, s.outer, 0.0), id);
        assert!((lyapunov_matrix(&set, s.outer, 1e8) - &id).norm() < 1e-6);
    }
}

#[test]
fn lyapunov_matrix_fixture() {
    let sys = model(1, 6);
    let s = DeltaSchedule::geometric(2f64.powf(-0.25), 3);
    let set = compensators_for(&sys, &s).unwrap();
    let w = lyapunov_matrix(&set, s.outer, 1.0);
    assert!((w.adjoint() - &w).norm() == 0.0);
    let (lo, hi) = hermitian_extremes(&w);
    assert!(rel(lo, 6.895687209186925e-1) < 1e-12);
    assert!(rel(hi, 1.3104312790813066e0) < 1e-12);
    assert!(rel((w - CMat::identity(6, 6)).norm(), 4.521788498809271e-1) < 1e-12);
}

#[test]
fn equivalence_with_zero_outer_is_trivial() {
    let sys = model(2, 6);
    let set = compensators_for(&sys, &DeltaSchedule::geometric(0.5, 5)).unwrap();
    let eq = equivalence_bounds(&set, 0.0, &FrequencyGrid::default_log()).unwrap();
    assert_eq!((eq.c_equiv, eq.c_equiv_upper, eq.halvings), (1.0, 1.0, 0));
}

#[test]
fn equivalence_halving_reaches_the_floor() {
    let sys = model(1, 6);
    let s = DeltaSchedule::geometric(2f64.powf(-0.25), 3);
    let set = compensators_for(&sys, &s).unwrap();
    // An inflated outer constant forces several halvings.
    let eq = equivalence_bounds(&set, 40.0, &FrequencyGrid::default_log()).unwrap();
    assert!(eq.halvings > 0 && eq.c_equiv >= EQUIV_FLOOR);
    assert_eq!(eq.outer, 40.0 * 0.5f64.powi(eq.halvings as i32));
    assert!(eq.c_equiv_upper <= 2.0 - eq.c_equiv + 1e-12);
}

#[test]
fn margin_at_zero_frequency_is_the_damping() {
    let sys = model(1, 6);
    let s = DeltaSchedule::geometric(0.5, 3);
    let set = compensators_for(&sys, &s).unwrap();
    let prof = lambda_profile(ModelTag::ModelI, 6).unwrap();
    let e = dissipation_margin(&sys, &set, s.outer, 0.0, 1.0, prof);
    assert_eq!((e.w_min, e.w_max), (1.0, 1.0));
    assert!(e.d_margin.abs() < 1e-15);
}

#[test]
fn certificates_have_expected_constants() {
    let want = [
        (2f64.powf(-0.75), 5.255602595335715e-2, 8.15968689875297e-4),
        (2f64.powf(-0.75), 7.432544468767005e-2, 4.690563959183563e-6),
        (2f64.powf(-0.25), 1.0511205190671428e-1, 2.09451473768951e-3),
        (2f64.powf(-0.25), 7.432544468767004e-2, 2.291687830407404e-4),
    ];
    for ((cert, &(t, m)), (r, outer, rate)) in certificates().iter().zip(&CASES).zip(want) {
        assert_eq!(cert.m, m);
        assert_eq!(cert.lambda, lambda_profile(model(t, m).model, m).unwrap());
        assert!(rel(cert.ratio, r) < 1e-15, "{t} {m}: ratio {}", cert.ratio);
        assert!(rel(cert.outer_delta, outer) < 1e-12, "{t} {m}: outer {}", cert.outer_delta);
        assert!(rel(cert.c_rate, rate) < 1e-6, "{t} {m}: rate {}", cert.c_rate);
        assert!(cert.c_equiv >= EQUIV_FLOOR && cert.c_equiv <= 1.0 && cert.c_equiv_upper >= 1.0);
        assert!(cert.c_equiv_upper <= 2.0 - cert.c_equiv + 1e-12);
    }
}

#[test]
fn certified_margins_are_nonnegative_on_the_grid() {
    let grid = FrequencyGrid::default_log();
    for cert in certificates() {
        let ms = certificate_margins(cert, &grid).unwrap();
        for e in &ms {
            assert!(e.scaled_margin >= -MARGIN_TOL, "xi={} scaled={}", e.xi, e.scaled_margin);
            assert!(e.d_margin >= -MARGIN_TOL && e.w_min >= cert.c_equiv - 1e-10 && e.w_max <= cert.c_equiv_upper + 1e-10);
        }
        let csv = margins_csv(&ms);
        assert!(csv.starts_with("xi,w_min,w_max,d_margin\n"));
        assert_eq!(csv.lines().count(), grid.len() + 1);
    }
}

#[test]
fn too_large_rate_fails_somewhere() {
    let grid = FrequencyGrid::default_log();
    for cert in certificates() {
        let sys = cert.system().unwrap();
        let set = cert.compensators(&sys).unwrap();
        let ms = dissipation_margins(&sys, &set, cert.outer_delta, &grid, 10.0, cert.lambda);
        assert!(ms.iter().any(|e| e.scaled_margin < -MARGIN_TOL));
    }
}

#[test]
fn rate_does_not_beat_the_spectrum() {
    let grid = FrequencyGrid::default_log();
    for (cert, &(t, m)) in certificates().iter().zip(&CASES) {
        let curve = spectral_abscissa_curve(&model(t, m), &grid).unwrap();
        let bound = grid
            .points
            .iter()
            .zip(&curve.abscissa)
            .map(|(&x, &a)| -a / cert.lambda.eval(x))
            .fold(f64::INFINITY, f64::min);
        assert!(cert.c_rate <= bound + 1e-9, "{t} {m}: {} vs {bound}", cert.c_rate);
    }
}

#[test]
fn envelope_holds_along_exact_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..100 {
        let cert = &certificates()[k % 4];
        let sys = cert.system().unwrap();
        let xi = 10f64.powf(rng.random_range(-3.0..3.0));
        let u0 = DVector::from_fn(cert.m, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let n0 = u0.norm_squared();
        let m = mode_matrix(&sys, xi);
        for t in [1.0, 10.0, 100.0] {
            let u = (&m * Complex64::new(-t, 0.0)).exp() * &u0;
            let bound = cert.envelope(xi, t) * n0;
            assert!(u.norm_squared() <= bound * (1.0 + 1e-9), "xi={xi} t={t}: {} > {bound}", u.norm_squared());
        }
    }
}

#[test]
fn certificate_json_round_trip() {
    let cert = &certificates()[2];
    let text = cert.to_json();
    assert!(text.contains("\"C_equiv\"") && text.contains("\"c_rate\""));
    assert_eq!(&LyapunovCertificate::from_json(&text).unwrap(), cert);
    let mut bad = cert.clone();
    bad.lambda.q += 1;
    assert!(LyapunovCertificate::from_json(&bad.to_json()).is_err());
}

#[test]
fn unsupported_systems_are_rejected() {
    let grid = FrequencyGrid::log(1e-2, 1e2, 41).unwrap();
    assert!(matches!(pointwise_certificate(&model(2, 4), &grid), Err(Error::Unsupported(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn lyapunov_matrix_is_hermitian(k in 0usize..4, lx in -3.0f64..3.0, lr in -3.0f64..0.0) {
        let (t, m) = CASES[k];
        let sys = model(t, m);
        let n = hyperdecay::compensator::delta_count(sys.model, m).unwrap();
        let s = DeltaSchedule::geometric(10f64.powf(lr), n);
        let set = compensators_for(&sys, &s).unwrap();
        let w = lyapunov_matrix(&set, s.outer, 10f64.powf(lx));
        prop_assert!((w.adjoint() - &w).norm() <= 1e-15 * w.norm());
    }
}
