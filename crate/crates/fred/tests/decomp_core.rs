use std::collections::BTreeMap;

use fred::models::arg::ArgParams;
use fred::models::gauss_var::GaussianVarModel;
use fred::models::inar::InarParams;
use fred::models::markov::BinaryChainParams;
use fred::oracle::{fred_term_oracle, fred_total_oracle, TransformSpec};
use fred::table::{assemble_table, normalized_shares, Argument, IDENTITY_TOL};
use fred::{FredError, Kind};
use nalgebra::DMatrix;
use proptest::prelude::*;

// INAR total FELD written out independently of the library.
fn inar_total(p: f64, lambda: f64, u: f64, y: f64, h: usize) -> f64 {
    let ph = p.powi(h as i32);
    (ph * u + (1.0 - ph + ph * (-u).exp()).ln()) * y + lambda / (1.0 - p) * (1.0 - ph) * (u - 1.0 + (-u).exp())
}

#[test]
fn inar_terms_assemble_with_tiny_residual() {
    let m = InarParams::new(0.5, 2.0).unwrap();
    let mut terms = BTreeMap::new();
    let mut totals = BTreeMap::new();
    for h in 1..=5 {
        let c = m.feld_components(1.0, h).unwrap();
        for k in 0..h {
            terms.insert((k, h), c.term(k, &[3.0]));
        }
        totals.insert(h, inar_total(0.5, 2.0, 1.0, 3.0, h));
    }
    let t = assemble_table(Kind::Feld, Argument::Laplace(vec![1.0]), vec![3.0], terms, totals, IDENTITY_TOL).unwrap();
    for h in 1..=5 {
        assert!(t.residual(h).unwrap().abs() < 1e-12, "h={h}: {:?}", t.residual(h));
    }
}

#[test]
fn fekd_first_horizon_is_an_empty_sum() {
    let t = assemble_table(
        Kind::Fekd,
        Argument::DensityAt(vec![1.0]),
        vec![0.0],
        BTreeMap::new(),
        [(1, 0.0)].into(),
        IDENTITY_TOL,
    )
    .unwrap();
    assert!(t.terms_at(1).is_empty());
    assert_eq!(t.total(1), Some(0.0));
}

#[test]
fn nan_term_names_its_position() {
    let terms = [((0, 2), 0.1), ((1, 2), f64::NAN)].into();
    let err = assemble_table(Kind::Feld, Argument::Laplace(vec![1.0]), vec![], terms, [(2, 0.1)].into(), IDENTITY_TOL)
        .unwrap_err();
    assert!(matches!(err, FredError::NonFinite { k: 1, h: 2 }), "{err}");
}

#[test]
fn missing_term_is_rejected() {
    let terms = [((0, 2), 0.1)].into();
    let err = assemble_table(Kind::Feld, Argument::Laplace(vec![1.0]), vec![], terms, [(2, 0.1)].into(), IDENTITY_TOL);
    assert!(err.is_err());
}

#[test]
fn inar_total_oracle_matches_closed_form() {
    let m = InarParams::new(0.5, 2.0).unwrap();
    let est = fred_total_oracle(&m, &TransformSpec::Laplace(vec![1.0]), &[3.0], 3, 100_000, 11).unwrap();
    let truth = inar_total(0.5, 2.0, 1.0, 3.0, 3);
    assert!(est.covers(truth, 3.0), "{est:?} vs {truth}");
}

#[test]
fn iid_gaussian_total_is_constant() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let m = GaussianVarModel::new(DMatrix::zeros(2, 2), sigma.clone()).unwrap();
    let u = [0.4, -0.7];
    let uv = nalgebra::DVector::from_column_slice(&u);
    let truth = 0.5 * (uv.transpose() * &sigma * &uv)[(0, 0)];
    for h in [1, 3] {
        let est = fred_total_oracle(&m, &TransformSpec::Laplace(u.to_vec()), &[0.5, 1.0], h, 100_000, 5).unwrap();
        assert!(est.covers(truth, 3.0), "h={h}: {est:?} vs {truth}");
    }
}

#[test]
fn iid_binary_chain_fekd_total_is_zero() {
    let m = BinaryChainParams::new(0.3, 0.0).unwrap().to_transition();
    let est = fred_total_oracle(&m, &TransformSpec::DensityAt(vec![1.0]), &[0.0], 3, 100_000, 3).unwrap();
    assert!(est.covers(0.0, 3.0), "{est:?}");
}

#[test]
fn arg_term_oracle_matches_closed_form() {
    let m = ArgParams::new(0.5, 1.0).unwrap();
    let c = m.feld_components(1.0, 4).unwrap();
    let truth = c.term(1, &[2.0]);
    let est = fred_term_oracle(&m, &TransformSpec::Laplace(vec![1.0]), &[2.0], 4, 1, 100_000, 21).unwrap();
    assert!(est.covers(truth, 3.0), "{est:?} vs {truth}");
    assert!(est.value >= -3.0 * est.std_error);
}

#[test]
fn last_term_equals_total_minus_others() {
    let m = InarParams::new(0.6, 1.5).unwrap();
    let (u, y, h) = (0.8, 2.0, 4);
    let c = m.feld_components(u, h).unwrap();
    let rest: f64 = (0..h - 1).map(|k| c.term(k, &[y])).sum();
    let target = inar_total(0.6, 1.5, u, y, h) - rest;
    let est = fred_term_oracle(&m, &TransformSpec::Laplace(vec![u]), &[y], h, h - 1, 100_000, 8).unwrap();
    assert!(est.covers(target, 3.0), "{est:?} vs {target}");
}

#[test]
fn oracle_is_deterministic() {
    let m = ArgParams::new(0.7, 1.3).unwrap();
    let t = TransformSpec::Laplace(vec![0.5]);
    let a = fred_term_oracle(&m, &t, &[1.0], 3, 0, 5_000, 99).unwrap();
    let b = fred_term_oracle(&m, &t, &[1.0], 3, 0, 5_000, 99).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
}

#[test]
fn std_error_shrinks_with_path_count() {
    let m = ArgParams::new(0.7, 1.3).unwrap();
    let t = TransformSpec::Laplace(vec![0.5]);
    let a = fred_term_oracle(&m, &t, &[1.0], 3, 0, 10_000, 1).unwrap();
    let b = fred_term_oracle(&m, &t, &[1.0], 3, 0, 40_000, 2).unwrap();
    let ratio = a.std_error / b.std_error;
    assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn too_few_paths_is_rejected() {
    let m = ArgParams::new(0.7, 1.3).unwrap();
    assert!(fred_total_oracle(&m, &TransformSpec::Laplace(vec![0.5]), &[1.0], 3, 10, 1).is_err());
}

#[test]
fn single_term_table_has_unit_share() {
    let m = InarParams::new(0.4, 1.0).unwrap();
    let t = m.feld_table(1.0, 2.0, &[1]).unwrap();
    assert_eq!(normalized_shares(&t).unwrap()[&(0, 1)], 1.0);
}

#[test]
fn low_persistence_puts_all_weight_on_last_update() {
    let m = InarParams::new(0.1, 2.0).unwrap();
    let t = m.feld_table(2.0, 3.0, &[10]).unwrap();
    let s = normalized_shares(&t).unwrap();
    assert!(s[&(9, 10)] > 0.99, "{}", s[&(9, 10)]);
}

#[test]
fn high_persistence_spreads_weight() {
    let m = InarParams::new(0.95, 2.0).unwrap();
    let t = m.feld_table(2.0, 3.0, &[10]).unwrap();
    let s = normalized_shares(&t).unwrap();
    assert!(s[&(9, 10)] < 0.9, "{}", s[&(9, 10)]);
    for k in 0..9 {
        assert!(s[&(k, 10)] > 0.0, "k={k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inar_identity_and_nonnegativity(p in 0.0f64..0.95, lambda in 0.1f64..5.0, u in 0.01f64..4.0, y in 0u32..20) {
        let m = InarParams::new(p, lambda).unwrap();
        let hs: Vec<usize> = (1..=10).collect();
        let t = m.feld_table(u, y as f64, &hs).unwrap();
        prop_assert!(t.max_relative_residual() <= 1e-10);
        prop_assert!(t.min_value() >= -1e-10);
    }

    #[test]
    fn shares_sum_to_one(beta in 0.05f64..0.95, delta in 0.2f64..4.0, u in 0.05f64..3.0, y in 0.0f64..10.0) {
        let m = ArgParams::new(beta, delta).unwrap();
        let t = m.feld_table(u, y, &[1, 4, 9]).unwrap();
        let s = normalized_shares(&t).unwrap();
        for h in [1, 4, 9] {
            let sum: f64 = (0..h).map(|k| s[&(k, h)]).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            // Terms carry the absolute 1e-10 nonnegativity slack; shares inherit it scaled by the total.
            let slack = 1e-10 / t.total(h).unwrap();
            for k in 0..h {
                prop_assert!(s[&(k, h)] >= -slack && s[&(k, h)] <= 1.0 + slack);
            }
        }
    }
}
