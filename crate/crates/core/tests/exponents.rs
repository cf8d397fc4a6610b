use std::collections::BTreeSet;

use hyperdecay::compensator::MARGIN_TOL;
use hyperdecay::error::Error;
use hyperdecay::exponents::*;
use hyperdecay::lyapunov::lambda_profile;
use hyperdecay::spectral::FrequencyGrid;
use hyperdecay::sysmodel::*;
use proptest::prelude::*;

const CATALOG: &str = include_str!("../catalog/exponent_ledgers.md");

fn best1(m: usize) -> ExponentVectors {
    ExponentVectors::I(model1_best_exponents(m).unwrap())
}

fn best2(m: usize) -> ExponentVectors {
    ExponentVectors::II(model2_best_exponents(m).unwrap())
}

fn sys1(m: usize) -> RelaxationSystem {
    build_model_one(&ModelParamsI::defaults(m)).unwrap()
}

fn sys2(m: usize) -> RelaxationSystem {
    build_model_two(&ModelParamsII::defaults(m)).unwrap()
}

#[test]
fn best_first_model_vectors() {
    let v = model1_best_exponents(6).unwrap();
    assert_eq!(v.alpha, [4.0, 4.0, 4.0, 2.0, 0.0]);
    assert_eq!(v.beta, [4.0, 2.0, 2.0, 2.0, 2.0]);
    assert_eq!(model1_best_exponents(8).unwrap().alpha, [8.0, 8.0, 8.0, 6.0, 4.0, 2.0, 0.0]);
    assert_eq!(
        model1_best_exponents(10).unwrap().alpha,
        [12.0, 12.0, 12.0, 10.0, 8.0, 6.0, 4.0, 2.0, 0.0]
    );
    assert!(model1_best_exponents(5).is_err());
}

#[test]
fn best_second_model_vectors() {
    let v = model2_best_exponents(6).unwrap();
    assert_eq!(v.alpha, [4.0, 4.0, 4.0, 6.0, 6.0]);
    assert_eq!(v.beta, [2.0, 2.0, 4.0, 4.0, 6.0]);
    let v = model2_best_exponents(8).unwrap();
    assert_eq!(v.alpha, [8.0, 8.0, 8.0, 10.0, 10.0, 12.0, 12.0]);
    assert_eq!(v.beta, [2.0, 2.0, 4.0, 4.0, 6.0, 6.0, 8.0]);
    assert!(model2_best_exponents(7).is_err());
}

#[test]
fn beta_ledger_examples() {
    for m in [6, 8, 10] {
        let best = model1_best_exponents(m).unwrap();
        let rep = model1_beta_constraints(m, &best.beta).unwrap();
        assert!(rep.satisfied && rep.violations.is_empty(), "m={m}: {:?}", rep.violations);
    }
    let zeros = model1_beta_constraints(6, &[0.0; 5]).unwrap();
    assert!(!zeros.satisfied && zeros.violated("I.b1.1"));
    let v = zeros.violations.iter().find(|v| v.id == "I.b1.1").unwrap();
    assert_eq!((v.lhs, v.rhs), (-1.0, 0.0));
    let mut raised = model1_best_exponents(6).unwrap().beta;
    raised[3] = 5.0;
    let rep = model1_beta_constraints(6, &raised).unwrap();
    assert!(rep.violated("I.b2.2"));
    let v = rep.violations.iter().find(|v| v.id == "I.b2.2").unwrap();
    assert_eq!((v.lhs, v.rhs), (2.0, 3.0));
}

#[test]
fn alpha_ledger_examples() {
    for m in [6, 8, 10] {
        let best = model1_best_exponents(m).unwrap();
        let rep = model1_alpha_constraints(m, &best.alpha).unwrap();
        assert!(rep.satisfied, "m={m}: {:?}", rep.violations);
    }
    let mut lowered = model1_best_exponents(6).unwrap().alpha;
    lowered[3] -= 1.0;
    let rep = model1_alpha_constraints(6, &lowered).unwrap();
    // The gap chain breaks at j = 4: α3 − α4 = 3 exceeds α4 − α5 = 1.
    assert!(!rep.violated("I.ac.6") && rep.violated("I.ac.9"));
    assert!(rep.violated("I.a4.3"));
    let zeros = model1_alpha_constraints(6, &[0.0; 5]).unwrap();
    assert!(zeros.violated("I.a2.1"));
}

#[test]
fn second_model_ledger_examples() {
    for m in [6, 8, 10] {
        let best = model2_best_exponents(m).unwrap();
        assert!(model2_constraints(m, &best.alpha, Side::Alpha).unwrap().satisfied, "alpha m={m}");
        assert!(model2_constraints(m, &best.beta, Side::Beta).unwrap().satisfied, "beta m={m}");
    }
    let zeros = model2_constraints(6, &[0.0; 5], Side::Beta).unwrap();
    assert!(zeros.violated("II.b.1.0"));
}

#[test]
fn wrong_lengths_are_rejected() {
    assert!(matches!(model1_beta_constraints(6, &[4.0; 4]), Err(Error::InvalidParams(_))));
    assert!(matches!(model1_alpha_constraints(6, &[4.0; 6]), Err(Error::InvalidParams(_))));
    assert!(matches!(model2_constraints(6, &[4.0; 4], Side::Alpha), Err(Error::InvalidParams(_))));
    let ledger = model1_beta_ledger(8).unwrap();
    assert!(evaluate(&ledger, &[2.0; 5], 1).is_err());
}

#[test]
fn ledger_sizes_are_fixed() {
    for m in [6usize, 8, 10, 12] {
        let n = m / 2;
        assert_eq!(model1_beta_ledger(m).unwrap().len(), 26 + 5 * (m - 6));
        assert_eq!(model1_alpha_ledger(m).unwrap().len(), 17 + 3 * (m - 6));
        assert_eq!(model1_alpha_chain(m).unwrap().len(), 2 * m - 3);
        assert_eq!(model2_ledger(m, Side::Alpha).unwrap().len(), 8 * n - 7);
        assert_eq!(model2_ledger(m, Side::Beta).unwrap().len(), 8 * n - 8);
        let best = model1_best_exponents(m).unwrap();
        assert_eq!(model1_alpha_constraints(m, &best.alpha).unwrap().checked, 17 + 3 * (m - 6) + 2 * m - 3);
    }
    assert_eq!(model1_beta_ledger(6).unwrap().iter().filter(|c| c.implied).count(), 1);
    assert!(model1_alpha_chain(6).unwrap().iter().all(|c| c.implied));
}

#[test]
fn ids_are_unique_and_catalogued() {
    let listed: BTreeSet<String> = CATALOG
        .lines()
        .filter(|l| l.starts_with("| `"))
        .filter_map(|l| l.split('`').nth(1).map(str::to_string))
        .collect();
    let mut chain_ids = BTreeSet::new();
    for line in CATALOG.lines().filter(|l| l.starts_with('`')) {
        chain_ids.extend(line.split('`').skip(1).step_by(2).map(str::to_string));
    }
    let mut used = BTreeSet::new();
    for m in [6, 8, 10] {
        let mut all = model1_beta_ledger(m).unwrap();
        all.extend(model1_alpha_ledger(m).unwrap());
        all.extend(model2_ledger(m, Side::Alpha).unwrap());
        all.extend(model2_ledger(m, Side::Beta).unwrap());
        let ids: BTreeSet<&str> = all.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids.len(), all.len(), "duplicate ids at m={m}");
        for c in &all {
            assert!(listed.contains(&c.template()), "{} missing from the catalog", c.template());
            used.insert(c.template());
        }
        for c in model1_alpha_chain(m).unwrap() {
            assert!(chain_ids.contains(&c.id), "{} missing from the catalog", c.id);
        }
    }
    let table: BTreeSet<String> = listed.into_iter().filter(|t| !t.starts_with("I.ac")).collect();
    assert_eq!(table, used, "catalog rows without a ledger entry");
}

#[test]
fn constraint_text_is_readable() {
    let l = model1_alpha_ledger(6).unwrap();
    let c = l.iter().find(|c| c.id == "I.a4.3").unwrap();
    assert_eq!(c.text(), "2·α4 + 4 ≥ α3 + α5 + 4");
    assert_eq!(c.to_string(), "I.a4.3: 2·α4 + 4 ≥ α3 + α5 + 4");
}

#[test]
fn eta_matches_closed_forms() {
    let grid = FrequencyGrid::default_log();
    for m in [6usize, 8, 10] {
        let n = m / 2;
        for (v, p, q) in [
            (best1(m), 2 * m - 6, 2 * m - 4),
            (best2(m), 6 * n - 10, 8 * n - 12),
        ] {
            let eta = lambda_from_exponents(&v).unwrap();
            let dom = eta.dominant().expect("a single term dominates");
            assert_eq!((dom.xi_pow, dom.one_plus_pow), (p as f64, q as f64));
            assert_eq!(eta.orders(), (p as f64, (q - p) as f64));
            assert!((eta.eval(1.0) / 0.5f64.powi(q as i32) - 1.0).abs() < 1e-14);
            for &xi in &grid.points {
                let want = xi.powi(p as i32) / (1.0 + xi).powi(q as i32);
                assert!((eta.eval(xi) / want - 1.0).abs() < 1e-12);
                assert_eq!(eta.eval(-xi), eta.eval(xi));
            }
        }
    }
}

#[test]
fn eta_requires_feasible_exponents() {
    let zeros = ExponentVectors::I(ExponentVectorsI { alpha: vec![0.0; 5], beta: vec![0.0; 5] });
    assert!(matches!(lambda_from_exponents(&zeros), Err(Error::Infeasible(k)) if k > 0));
    let negative = ExponentVectors::II(ExponentVectorsII { alpha: vec![-1.0; 5], beta: vec![2.0; 5] });
    assert!(matches!(lambda_from_exponents(&negative), Err(Error::InvalidParams(_))));
}

#[test]
fn reconcile_brackets() {
    let grid = FrequencyGrid::default_log();
    for m in [6usize, 8] {
        for (v, q) in [(best1(m), m as i32 - 2), (best2(m), 2 * (m as i32 - 3))] {
            let eta = lambda_from_exponents(&v).unwrap();
            let lam = lambda_profile(v.model(), m).unwrap();
            let (lo, hi) = reconcile_rates(&lam, &eta, &grid);
            let b = 2f64.powi(q);
            assert!(lo >= 1.0 / b * (1.0 - 1e-12) && hi <= b, "{:?} m={m}: ({lo}, {hi})", v.model());
            // (1+|ξ|)² ≥ 1+ξ² puts the ratio at or below one.
            assert!(hi <= 1.0 && lo > 0.0);
        }
    }
    let eta = lambda_from_exponents(&best2(6)).unwrap();
    assert_eq!(reconcile_rates(&eta, &eta, &grid), (1.0, 1.0));
}

#[test]
fn best_low_frequency_choice_cannot_be_lowered() {
    let best = model1_best_exponents(6).unwrap().alpha;
    let ledger = model1_alpha_ledger(6).unwrap();
    let mut tried = 0;
    for code in 0..3usize.pow(5) {
        let d: Vec<f64> = (0..5).map(|k| -(((code / 3usize.pow(k as u32)) % 3) as f64)).collect();
        if d[0] == 0.0 {
            continue;
        }
        let cand: Vec<f64> = best.iter().zip(&d).map(|(a, d)| a + d).collect();
        tried += 1;
        let rep = evaluate(&ledger, &cand, 1).unwrap();
        assert!(!rep.satisfied, "{cand:?} passes the low-frequency ledger");
    }
    assert_eq!(tried, 162);
}

#[test]
fn alt_dissipation_certifies_best_choices() {
    let grid = FrequencyGrid::default_log();
    for m in [6, 8] {
        for (sys, v) in [(sys1(m), best1(m)), (sys2(m), best2(m))] {
            let rep = alt_dissipation_check(&sys, &v, &grid).unwrap();
            assert!(rep.coercivity.success(), "{:?} m={m}", sys.model);
            assert!(rep.coercivity.margin.iter().all(|&x| x >= -MARGIN_TOL));
            assert!(rep.equivalence.0 >= 0.5 && rep.equivalence.1 <= 1.5);
            assert_eq!(rep.constants.len(), m);
        }
    }
}

#[test]
fn alt_dissipation_rejects_bad_input() {
    let grid = FrequencyGrid::log(1e-2, 1e2, 21).unwrap();
    let zeros = ExponentVectors::II(ExponentVectorsII { alpha: vec![0.0; 5], beta: vec![0.0; 5] });
    assert!(matches!(alt_dissipation_check(&sys2(6), &zeros, &grid), Err(Error::Infeasible(_))));
    assert!(matches!(alt_dissipation_check(&sys1(6), &best2(6), &grid), Err(Error::InvalidParams(_))));
    assert!(matches!(alt_dissipation_check(&sys1(8), &best1(6), &grid), Err(Error::InvalidParams(_))));
}

#[test]
fn identity_constants_pair_the_second_and_third() {
    let c = identity_constants(ModelTag::ModelI, 6, 0.5, 1.0);
    assert_eq!(c, [0.0625, 0.125, 0.125, 0.25, 0.5, 0.0]);
    let c = identity_constants(ModelTag::ModelII, 6, 0.5, 2.0);
    assert_eq!(c[0], 0.0);
    // c_2² = s·r·c_m, which is c_m itself when s·r = 1.
    assert_eq!(c[1] * c[1], c[5]);
}

#[test]
fn vectors_json_shape() {
    let text = serde_json::to_string(&best1(6)).unwrap();
    assert!(text.starts_with("{\"model\":\"model1\",\"alpha\":[4.0"));
    let back: ExponentVectors = serde_json::from_str(&text).unwrap();
    assert_eq!(back, best1(6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reports_are_consistent(alpha in proptest::collection::vec(0u8..10, 7), beta in proptest::collection::vec(0u8..10, 7)) {
        let a: Vec<f64> = alpha.iter().map(|&x| x as f64).collect();
        let b: Vec<f64> = beta.iter().map(|&x| x as f64).collect();
        for rep in [
            model1_alpha_constraints(8, &a).unwrap(),
            model1_beta_constraints(8, &b).unwrap(),
            model2_constraints(8, &a, Side::Alpha).unwrap(),
            model2_constraints(8, &b, Side::Beta).unwrap(),
        ] {
            prop_assert_eq!(rep.satisfied, rep.violations.is_empty());
            for v in &rep.violations {
                prop_assert!(v.lhs < v.rhs);
            }
        }
    }

    #[test]
    fn dominant_term_is_the_minimum(lx in -4.0f64..4.0, k in 0usize..4) {
        let v = [best1(6), best1(8), best2(6), best2(8)][k].clone();
        let eta = lambda_from_exponents(&v).unwrap();
        let xi = 10f64.powf(lx);
        let d = eta.dominant().unwrap();
        prop_assert!(eta.terms.iter().all(|t| d.ln_eval(xi) <= t.ln_eval(xi) + 1e-12));
    }

    #[test]
    fn energy_matrix_is_hermitian_and_fades(lx in -3.0f64..3.0, k in 0usize..2) {
        let (sys, v) = if k == 0 { (sys1(6), best1(6)) } else { (sys2(6), best2(6)) };
        let c = identity_constants(sys.model, 6, 0.5, 1.0);
        let n = interaction_matrix(&sys, &v, &c, 10f64.powf(lx));
        prop_assert!(n.iter().all(|z| z.is_finite()));
        let far = interaction_matrix(&sys, &v, &c, 1e8);
        let near = interaction_matrix(&sys, &v, &c, 1e-8);
        prop_assert!(far.norm() < 1e-6 && near.norm() < 1e-6);
    }
}
