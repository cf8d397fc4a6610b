use std::sync::OnceLock;

use hyperdecay::evolve::*;
use hyperdecay::lyapunov::{pointwise_certificate, LyapunovCertificate};
use hyperdecay::spectral::{mode_matrix, FrequencyGrid};
use hyperdecay::sysmodel::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

type CVec = DVector<Complex64>;

fn model(tag: u8, m: usize) -> RelaxationSystem {
    match tag {
        1 => build_model_one(&ModelParamsI::defaults(m)).unwrap(),
        _ => build_model_two(&ModelParamsII::defaults(m)).unwrap(),
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn certs() -> &'static [LyapunovCertificate; 2] {
    static C: OnceLock<[LyapunovCertificate; 2]> = OnceLock::new();
    C.get_or_init(|| {
        let g = FrequencyGrid::default_log();
        [pointwise_certificate(&model(1, 6), &g).unwrap(), pointwise_certificate(&model(2, 6), &g).unwrap()]
    })
}

/// Classical fourth-order Runge–Kutta for `u' = −Mu`.
fn rk4(m: &DMatrix<Complex64>, u0: &CVec, t: f64, steps: usize) -> CVec {
    let h = c(t / steps as f64);
    let f = |u: &CVec| -(m * u);
    let mut u = u0.clone();
    for _ in 0..steps {
        let k1 = f(&u);
        let k2 = f(&(&u + &k1 * (h * 0.5)));
        let k3 = f(&(&u + &k2 * (h * 0.5)));
        let k4 = f(&(&u + &k3 * h));
        u += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * (h / 6.0);
    }
    u
}

fn state(m: usize, z: &[(f64, f64)]) -> CVec {
    DVector::from_fn(m, |i, _| Complex64::new(z[i].0, z[i].1))
}

#[test]
fn zero_time_returns_the_data() {
    let sys = model(2, 8);
    let u0 = DVector::from_fn(8, |i, _| Complex64::new(i as f64, -1.0));
    assert_eq!(propagate_mode(&sys, 0.3, &u0, 0.0), u0);
}

#[test]
fn zero_frequency_damps_the_last_component() {
    let sys = model(1, 6);
    let mut u0 = DVector::zeros(6);
    u0[5] = c(1.0);
    for t in [0.5, 3.0, 20.0] {
        let u = propagate_mode(&sys, 0.0, &u0, t);
        let mut want = DVector::zeros(6);
        want[5] = c((-t).exp());
        assert!((u - want).norm() < 1e-14);
    }
}

#[test]
fn matches_runge_kutta_oracle() {
    let sys = model(1, 6);
    let u0 = DVector::from_element(6, c(1.0 / 6f64.sqrt()));
    let u = propagate_mode(&sys, 1.0, &u0, 10.0);
    let oracle = rk4(&mode_matrix(&sys, 1.0), &u0, 10.0, 20_000);
    assert!((&u - &oracle).norm() < 1e-8);
    assert!((u.norm() - 5.229564841097784e-1).abs() < 1e-12);
}

#[test]
fn default_grid_needs_no_fallback() {
    let grid = FrequencyGrid::log(1e-3, 1e3, 61).unwrap();
    for (t, m) in [(1, 6), (1, 8), (2, 6), (2, 8)] {
        let sys = model(t, m);
        assert!(grid.points.iter().all(|&x| ModePropagator::new(&sys, x).uses_eigenbasis()));
    }
}

#[test]
fn initial_data_examples() {
    let grid = FrequencyGrid::explicit(vec![0.5, 1.0]).unwrap();
    let g1 = InitialDataSpec::gaussian(1.0, vec![2.0, 0.0, -1.0]);
    let g2 = InitialDataSpec::gaussian(2.0, vec![2.0, 0.0, -1.0]);
    let u1 = synthesize_initial_data(&g1, &FrequencyGrid::explicit(vec![1e-300]).unwrap()).unwrap();
    assert_eq!(u1[0], DVector::from_vec(vec![c(2.0), c(0.0), c(-1.0)]));
    let u2 = synthesize_initial_data(&g2, &grid).unwrap();
    assert_eq!(u2[1], DVector::from_vec(vec![c(2.0), c(0.0), c(-1.0)]) * c((-2f64).exp()));
    let b = synthesize_initial_data(&InitialDataSpec::band(1.0, 2.0, vec![1.0, 1.0, 1.0]), &grid).unwrap();
    assert_eq!(b[0], DVector::zeros(3));
    assert_eq!(b[1], DVector::from_element(3, c(1.0)));
    assert!(InitialDataSpec::gaussian(0.0, vec![1.0]).validate().is_err());
    assert!(InitialDataSpec::band(2.0, 1.0, vec![1.0]).validate().is_err());
    assert!(InitialDataSpec::gaussian(1.0, vec![0.0, 0.0]).validate().is_err());
}

#[test]
fn initial_data_json_shape() {
    let s = InitialDataSpec::band(10.0, 20.0, vec![1.0, 0.0]);
    let v: serde_json::Value = serde_json::to_value(&s).unwrap();
    assert_eq!(v["kind"], "band");
    assert_eq!(v["r_low"], 10.0);
    let back: InitialDataSpec = serde_json::from_value(v).unwrap();
    assert_eq!(back, s);
}

#[test]
fn sobolev_norm_examples() {
    let grid = FrequencyGrid::default_log();
    let zero = vec![DVector::<Complex64>::zeros(2); grid.len()];
    assert_eq!(sobolev_norm(&zero, 0, &grid).unwrap(), 0.0);
    assert!(sobolev_norm(&zero, -1, &grid).is_err());

    let fine = FrequencyGrid::log(1e-3, 1e3, 40_001).unwrap();
    let ind = synthesize_initial_data(&InitialDataSpec::band(1.0, 2.0, vec![1.0]), &fine).unwrap();
    let n = sobolev_norm(&ind, 0, &fine).unwrap();
    // The jump at each band edge costs about half a log cell.
    assert!((n - (1.0 / std::f64::consts::PI).sqrt()).abs() < 5e-4, "{n}");
}

#[test]
fn sobolev_norm_of_gaussians_matches_moments() {
    let grid = FrequencyGrid::default_log();
    for sigma in [0.5, 1.0, 3.0] {
        let u = synthesize_initial_data(&InitialDataSpec::gaussian(sigma, vec![1.0, -2.0]), &grid).unwrap();
        for k in 0..3 {
            // ∫₀^∞ ξ^{2k} e^{−σ²ξ²} dξ = (2k−1)!! √π / (2^{k+1} σ^{2k+1}).
            let dfact: f64 = (1..=k).map(|j| (2 * j - 1) as f64).product();
            let moment = dfact * std::f64::consts::PI.sqrt() / (2f64.powi(k + 1) * sigma.powi(2 * k + 1));
            let want = (5.0 * moment / std::f64::consts::PI).sqrt();
            let got = sobolev_norm(&u, k, &grid).unwrap();
            assert!((got / want - 1.0).abs() < 1e-6, "sigma={sigma} k={k}: {got} vs {want}");
        }
    }
}

#[test]
fn envelope_at_time_zero_is_one() {
    let grid = FrequencyGrid::log(1e-2, 1e2, 21).unwrap();
    let e = pointwise_envelope_check(&model(1, 6), &certs()[0], &grid, 3, &[0.0]).unwrap();
    assert!((e - 1.0).abs() < 1e-15);
}

#[test]
fn envelope_stays_under_the_certified_constant() {
    let grid = FrequencyGrid::default_log();
    let times = log_times(1.0, 1e4, 9).unwrap();
    for (cert, sys) in certs().iter().zip([model(1, 6), model(2, 6)]) {
        let e = pointwise_envelope_check(&sys, cert, &grid, 4, &times).unwrap();
        assert!(e <= (cert.c_equiv_upper / cert.c_equiv).sqrt(), "{e}");
        assert!(e > 0.9);
    }
}

#[test]
fn gaussian_decay_matches_the_proven_rates() {
    let grid = FrequencyGrid::default_log();
    let times = log_times(1.0, 1e6, 61).unwrap();
    for (t, target) in [(1, 1.0 / 12.0), (2, 1.0 / 16.0)] {
        let sys = model(t, 6);
        let rep = decay_report(&sys, &InitialDataSpec::gaussian(1.0, InitialDataSpec::unit(6, 1)), 0, 0, &times, &grid).unwrap();
        assert!(rep.pass && rep.monotone_tail);
        assert!(rep.exponents[0] == target && rep.exponents[1] == 0.0);
        assert!(rep.fitted_slope.unwrap() <= -target + 0.05);
        assert!(rep.to_csv().starts_with("t,measured,bound,ratio\n"));
    }
}

#[test]
fn decay_exponents_per_model() {
    assert_eq!(decay_exponents(ModelTag::ModelI, 8, 1, 2).unwrap(), [1.5 / 10.0, 1.0]);
    assert_eq!(decay_exponents(ModelTag::ModelII, 8, 0, 3).unwrap(), [0.5 / 14.0, 0.5]);
}

#[test]
fn zero_data_decays_trivially() {
    let grid = FrequencyGrid::log(1e-2, 1e2, 101).unwrap();
    let spec = InitialDataSpec { kind: DataKind::Custom { samples: vec![0.0; 101] }, amplitude: InitialDataSpec::unit(6, 1) };
    let rep = decay_report(&model(1, 6), &spec, 0, 0, &[1.0, 10.0, 100.0], &grid).unwrap();
    assert!(rep.pass && rep.measured_norm.iter().all(|&n| n == 0.0) && rep.fitted_slope.is_none());
}

#[test]
fn decay_rejects_bad_times() {
    let grid = FrequencyGrid::log(1e-2, 1e2, 11).unwrap();
    let spec = InitialDataSpec::gaussian(1.0, InitialDataSpec::unit(6, 1));
    assert!(decay_report(&model(1, 6), &spec, 0, 0, &[1.0, 1.0], &grid).is_err());
    assert!(decay_report(&model(1, 6), &spec, 0, 0, &[5.0, 2.0], &grid).is_err());
    assert!(decay_report(&model(1, 6), &InitialDataSpec::gaussian(1.0, vec![1.0]), 0, 0, &[1.0], &grid).is_err());
}

fn band_times() -> Vec<f64> {
    std::iter::once(0.0).chain(log_times(1e-2, 1e8, 401).unwrap()).collect()
}

#[test]
fn band_data_shows_regularity_loss() {
    let grid = FrequencyGrid::default_log();
    let sys = model(1, 6);
    let e10 = band_e_folding(&sys, 10.0, InitialDataSpec::unit(6, 1), &grid, &band_times()).unwrap().unwrap();
    let e20 = band_e_folding(&sys, 20.0, InitialDataSpec::unit(6, 1), &grid, &band_times()).unwrap().unwrap();
    let ratio = e20 / e10;
    assert!((2.0..=8.0).contains(&ratio), "{ratio}");
    assert!((ratio - 4.0111229).abs() < 1e-3);
}

#[test]
fn band_e_folding_is_faster_than_the_certified_rate() {
    // The certified rate is a lower bound, far from sharp at R = 10.
    let grid = FrequencyGrid::default_log();
    let sys = model(1, 6);
    let e10 = band_e_folding(&sys, 10.0, InitialDataSpec::unit(6, 1), &grid, &band_times()).unwrap().unwrap();
    let cert = &certs()[0];
    let predicted = 1.0 / (2.0 * cert.c_rate * cert.lambda.eval(10.0));
    assert!((e10 / 476.476 - 1.0).abs() < 1e-3, "{e10}");
    assert!(e10 < predicted / 100.0);
}

#[test]
fn e_folding_interpolates_in_log_time() {
    let t = [1.0, 10.0, 100.0];
    let n = [1.0, 1.0, (-2.0f64).exp()];
    assert!((e_folding_time(&t, &n).unwrap() - 10f64.powf(1.5)).abs() < 1e-9);
    assert!(e_folding_time(&t, &[1.0, 0.9, 0.8]).is_none());
}

#[test]
fn trajectory_csv_layout() {
    let sys = model(2, 6);
    let tr = trajectory(&sys, 1.0, &DVector::from_element(6, c(1.0)), &[0.0, 1.0, 2.0]).unwrap();
    let csv = tr.to_csv();
    assert!(csv.starts_with("t,abs,abs_u1,abs_u2,abs_u3,abs_u4,abs_u5,abs_u6\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(trajectory(&sys, 1.0, &DVector::from_element(6, c(1.0)), &[1.0, 0.5]).is_err());
}

fn cases() -> impl Strategy<Value = (u8, usize)> {
    prop_oneof![Just((1u8, 6usize)), Just((1, 8)), Just((2, 6)), Just((2, 8))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn semigroup_property(case in cases(), lx in -2.0f64..2.0, t1 in 0.0f64..50.0, t2 in 0.0f64..50.0,
                          z in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8)) {
        let sys = model(case.0, case.1);
        let p = ModePropagator::new(&sys, 10f64.powf(lx));
        let u0 = state(case.1, &z);
        let direct = p.propagate(&u0, t1 + t2);
        let stepped = p.propagate(&p.propagate(&u0, t1), t2);
        prop_assert!((&direct - &stepped).norm() <= 1e-9 * direct.norm().max(1e-300));
    }

    #[test]
    fn modes_contract(case in cases(), lx in -3.0f64..3.0, lt in -2.0f64..4.0,
                      z in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8)) {
        let sys = model(case.0, case.1);
        let u0 = state(case.1, &z);
        let u = propagate_mode(&sys, 10f64.powf(lx), &u0, 10f64.powf(lt));
        prop_assert!(u.norm() <= u0.norm() + 1e-10);
    }

    #[test]
    fn energy_rate_and_defect(case in cases(), lx in -1.0f64..1.0, t in 0.0f64..20.0,
                              z in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8)) {
        let sys = model(case.0, case.1);
        let xi = 10f64.powf(lx);
        let p = ModePropagator::new(&sys, xi);
        let u0 = state(case.1, &z);
        // Both checks are relative to |u|, which the zero state does not have.
        prop_assume!(u0.norm() > 1e-3);
        let m = mode_matrix(&sys, xi);
        // Central differences at h and h/2 combined by Richardson
        // extrapolation, so the O(h²‖M‖³) truncation error drops out.
        let h = 1e-3 / m.norm();
        let t = t.max(h);
        let u = p.propagate(&u0, t);
        let central = |h: f64| {
            let (um, up) = (p.propagate(&u0, t - h), p.propagate(&u0, t + h));
            ((&up - &um) / c(2.0 * h), (up.norm_squared() - um.norm_squared()) / (2.0 * h))
        };
        let ((d1, r1), (d2, r2)) = (central(h), central(h / 2.0));
        let deriv = (d2 * c(4.0) - d1) / c(3.0);
        let defect = (&deriv + &m * &u).norm() / u.norm();
        prop_assert!(defect <= 1e-8, "defect {defect}");
        let rate = (4.0 * r2 - r1) / 3.0;
        let damped = if case.0 == 1 { case.1 - 1 } else { 1 };
        let want = -2.0 * sys.gamma.unwrap() * u[damped].norm_sqr();
        prop_assert!((rate - want).abs() <= 1e-6 * want.abs().max(u.norm_squared()), "{rate} vs {want}");
    }
}
