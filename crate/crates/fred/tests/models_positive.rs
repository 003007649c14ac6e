use fred::models::arg::{crossing, ArgParams};
use fred::models::war::WarParams;
use fred::oracle::mc_expectation;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn arg_closed_compound(beta: f64, u: f64, h: usize) -> f64 {
    let bh = beta.powi(h as i32);
    bh * u / (1.0 + u * (1.0 - bh) / (1.0 - beta))
}

#[test]
fn arg_base_values() {
    let a = ArgParams::new(0.5, 1.0).unwrap();
    assert_eq!(a.a(0.0), 0.0);
    assert_eq!(a.c(0.0), 0.0);
    assert!((a.compound_a(1.0, 3) - 0.125 / 2.75).abs() < 1e-15);
}

#[test]
fn arg_one_step_laplace_form() {
    let a = ArgParams::new(0.7, 1.6).unwrap();
    for (u, y) in [(0.3, 0.0), (1.0, 2.5), (4.0, 7.0)] {
        let direct = -0.7 * u / (1.0 + u) * y - 1.6 * (1.0f64 + u).ln();
        assert!((a.log_laplace(u, 1, y) - direct).abs() < 1e-13);
        // b(u) = c(u) - c(a(u)) collapses to -delta log(1+u).
        assert!((a.c(u) - a.c(a.a(u)) + 1.6 * (1.0f64 + u).ln()).abs() < 1e-13);
    }
}

#[test]
fn arg_one_step_laplace_matches_simulation() {
    let a = ArgParams::new(0.7, 1.6).unwrap();
    for (u, y) in [(0.3, 1.0), (1.5, 4.0)] {
        let truth = a.log_laplace(u, 1, y).exp();
        let est = mc_expectation(&a, &[y], 1, 100_000, 3, |s| (-u * s[0]).exp()).unwrap();
        assert!(est.covers(truth, 3.0), "{est:?} vs {truth}");
    }
}

#[test]
fn arg_iid_case_has_no_state_loading() {
    let a = ArgParams::new(0.0, 1.2).unwrap();
    for h in 1..=5 {
        assert_eq!(a.feld_alpha(1.3, h, None).unwrap(), 0.0);
        for k in 0..h {
            assert_eq!(a.feld_alpha(1.3, h, Some(k)).unwrap(), 0.0);
        }
    }
}

#[test]
fn arg_alpha_example() {
    let a = ArgParams::new(0.9, 1.0).unwrap();
    let v = a.feld_alpha(1.0, 2, None).unwrap();
    assert!((v - 0.81 * (1.0 - 1.0 / 2.9)).abs() < 1e-14);
    assert!((v - 0.530690).abs() < 5e-7);
}

fn share(a: &ArgParams, u: f64, h: usize, k: usize) -> f64 {
    a.feld_alpha(u, h, Some(k)).unwrap() / a.feld_alpha(u, h, None).unwrap()
}

#[test]
fn arg_early_shares_fall_with_u() {
    let a = ArgParams::new(0.9, 1.0).unwrap();
    let us = [0.1, 0.5, 1.0, 2.0, 5.0];
    for h in [2, 3, 4] {
        for k in 0..h - 1 {
            let s: Vec<f64> = us.iter().map(|&u| share(&a, u, h, k)).collect();
            assert!(s.windows(2).all(|w| w[1] < w[0]), "h={h} k={k}: {s:?}");
        }
    }
    // At longer horizons the early shares still fall once u is large enough.
    let far = [5.0, 10.0, 20.0, 50.0];
    for h in [8, 12] {
        for k in 0..h - 1 {
            let s: Vec<f64> = far.iter().map(|&u| share(&a, u, h, k)).collect();
            assert!(s.windows(2).all(|w| w[1] < w[0]), "h={h} k={k}: {s:?}");
        }
    }
}

#[test]
fn arg_share_monotonicity_exceptions() {
    let a = ArgParams::new(0.9, 1.0).unwrap();
    // The last-update share rises with u at every horizon.
    for h in [2, 5, 10] {
        let s: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|&u| share(&a, u, h, h - 1)).collect();
        assert!(s.windows(2).all(|w| w[1] > w[0]), "h={h}: {s:?}");
    }
    // And an intermediate share can rise at small u before falling.
    assert!(share(&a, 0.5, 8, 6) > share(&a, 0.1, 8, 6));
}

#[test]
fn arg_vanishes_at_zero_argument() {
    let a = ArgParams::new(0.6, 1.4).unwrap();
    let t = a.feld_table(1e-12, 3.0, &[1, 5]).unwrap();
    assert!(t.total(5).unwrap().abs() < 1e-12);
    assert_eq!(a.feld_table(0.0, 3.0, &[3]).unwrap().total(3), Some(0.0));
}

#[test]
fn arg_closed_form_agrees_with_affine_engine() {
    let a = ArgParams::new(0.8, 1.3).unwrap();
    let m = a.affine().unwrap();
    for u in [0.1, 0.7, 2.0, 5.0] {
        for h in [1, 2, 5, 10] {
            let x = a.feld_components(u, h).unwrap();
            let z = m.feld_components(&[u], h).unwrap();
            for y in [0.0, 2.0] {
                for k in 0..h {
                    assert!((x.term(k, &[y]) - z.term(k, &[y])).abs() < 1e-10);
                }
                assert!((x.total(&[y]) - z.total(&[y])).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn arg_constant_part_positive() {
    for beta in [0.1, 0.5, 0.9] {
        let a = ArgParams::new(beta, 1.1).unwrap();
        for u in [0.05, 0.5, 2.0, 8.0] {
            for h in 1..=10 {
                assert!(a.feld_beta(u, h, None).unwrap() > 0.0, "beta={beta} u={u} h={h}");
            }
        }
    }
}

#[test]
fn arg_crossing_examples() {
    let c1 = crossing(1, 0.9).unwrap();
    let c2 = crossing(2, 0.9).unwrap();
    assert!((c1 - 3.737).abs() < 5e-4, "{c1}");
    assert!((c2 - 1.047).abs() < 5e-4, "{c2}");
    let a = ArgParams::new(0.9, 1.0).unwrap();
    for (h, c) in [(1, c1), (2, c2)] {
        let gap = a.feld_alpha(c, h, None).unwrap() - a.feld_alpha(c, h + 1, None).unwrap();
        assert!(gap.abs() < 1e-9, "h={h}: {gap}");
    }
}

fn bisect_crossing(a: &ArgParams, h: usize, mut lo: f64, mut hi: f64) -> f64 {
    let g = |u: f64| a.feld_alpha(u, h, None).unwrap() - a.feld_alpha(u, h + 1, None).unwrap();
    assert!(g(lo) * g(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(lo) * g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn arg_crossing_sign_change() {
    for beta in [0.8, 0.9, 0.95] {
        let a = ArgParams::new(beta, 1.0).unwrap();
        for h in 1..=4 {
            let c = crossing(h, beta).unwrap();
            if c <= 0.0 {
                continue;
            }
            let root = bisect_crossing(&a, h, c * 0.2, c * 5.0);
            assert!((root - c).abs() < 1e-9 * c.max(1.0), "beta={beta} h={h}: {root} vs {c}");
        }
    }
    assert!(crossing(1, 1.0).is_err());
}

fn war2() -> WarParams {
    WarParams::new(
        DMatrix::from_row_slice(2, 2, &[0.6, 0.1, -0.2, 0.4]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
        3.0,
    )
    .unwrap()
}

#[test]
fn war_sigma_h_sums() {
    let w = war2();
    let (m, s) = (w.m().clone(), w.sigma().clone());
    let three = &s + &m * &s * m.transpose() + &m * &m * &s * (&m * &m).transpose();
    assert!((w.sigma_h(3) - three).abs().max() < 1e-14);
    let iid = WarParams::new(DMatrix::zeros(2, 2), s.clone(), 3.0).unwrap();
    assert_eq!(iid.sigma_h(4), s);
    let scalar = WarParams::new(DMatrix::from_element(1, 1, 0.7), DMatrix::from_element(1, 1, 2.0), 1.5).unwrap();
    for h in 0..8 {
        let e = 2.0 * (1.0 - 0.49f64.powi(h as i32)) / (1.0 - 0.49);
        assert!((scalar.sigma_h(h)[(0, 0)] - e).abs() < 1e-13);
    }
}

#[test]
fn war_zero_argument_gives_zero() {
    let w = war2();
    let y = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let t = w.feld_table(&DMatrix::zeros(2, 2), &y, &[1, 3]).unwrap();
    assert!(t.total(3).unwrap().abs() < 1e-15);
    for h in [1, 3] {
        for k in 0..h {
            assert!(t.term(k, h).unwrap().abs() < 1e-15);
        }
    }
}

#[test]
fn scalar_war_equals_arg() {
    let (m, s2, kdof) = (0.8, 0.6, 3.4);
    let w = WarParams::new(DMatrix::from_element(1, 1, m), DMatrix::from_element(1, 1, s2), kdof).unwrap();
    let a = ArgParams::new(m * m, kdof / 2.0).unwrap();
    for i in 0..10 {
        let gamma = 0.15 + 0.35 * i as f64;
        let y = 0.4 * i as f64;
        let (u, ya) = (2.0 * s2 * gamma, y / (2.0 * s2));
        let g = DMatrix::from_element(1, 1, gamma);
        let yw = DMatrix::from_element(1, 1, y);
        for h in 1..=6 {
            let ll = w.log_laplace(&g, &yw, h).unwrap();
            assert!((ll - a.log_laplace(u, h, ya)).abs() < 1e-12);
            let wc = w.feld_total(&g, &yw, h).unwrap();
            let ac = a.feld_components(u, h).unwrap();
            assert!((wc - ac.total(&[ya])).abs() < 1e-12, "gamma={gamma} h={h}");
            for k in 0..h {
                let d = w.feld_term(&g, &yw, h, k).unwrap() - ac.term(k, &[ya]);
                assert!(d.abs() < 1e-12, "gamma={gamma} y={y} h={h} k={k}: {d}");
            }
        }
    }
}

#[test]
fn war_laplace_matches_simulation() {
    let w = war2();
    let y = [2.0, 0.5, 0.5, 1.0];
    let ym = DMatrix::from_row_slice(2, 2, &y);
    let g = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
    for h in [1, 2] {
        let truth = w.log_laplace(&g, &ym, h).unwrap().exp();
        let est = mc_expectation(&w, &y, h, 100_000, 40 + h as u64, |s| {
            (-(g.clone() * DMatrix::from_row_slice(2, 2, s)).trace()).exp()
        })
        .unwrap();
        assert!(est.covers(truth, 3.0), "h={h}: {est:?} vs {truth}");
        let mean = w.conditional_mean(&ym, h);
        let est = mc_expectation(&w, &y, h, 100_000, 60 + h as u64, |s| s[1]).unwrap();
        assert!(est.covers(mean[(0, 1)], 3.0), "h={h}: {est:?} vs {}", mean[(0, 1)]);
    }
}

#[test]
fn iid_war_loads_only_the_last_update() {
    let w = WarParams::new(DMatrix::zeros(2, 2), war2().sigma().clone(), 3.0).unwrap();
    let g = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
    let y = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    for h in 1..=5 {
        for k in 0..h - 1 {
            assert!(w.feld_term(&g, &y, h, k).unwrap().abs() < 1e-14);
        }
        let last = w.feld_term(&g, &y, h, h - 1).unwrap();
        assert!((last - w.feld_total(&g, &y, h).unwrap()).abs() < 1e-14);
    }
}

fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

#[test]
fn war_invariant_under_congruence() {
    let w = war2();
    let g = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
    let y = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    for theta in [0.3, 1.1, 2.5] {
        let q = rotation(theta);
        let c = |x: &DMatrix<f64>| &q * x * q.transpose();
        let sym = |x: DMatrix<f64>| (&x + x.transpose()) * 0.5;
        let wq = WarParams::new(c(w.m()), sym(c(w.sigma())), 3.0).unwrap();
        let (gq, yq) = (sym(c(&g)), sym(c(&y)));
        let a = w.feld_table(&g, &y, &[1, 3, 5]).unwrap();
        let b = wq.feld_table(&gq, &yq, &[1, 3, 5]).unwrap();
        for h in [1, 3, 5] {
            assert!((a.total(h).unwrap() - b.total(h).unwrap()).abs() < 1e-9);
            for k in 0..h {
                assert!((a.term(k, h).unwrap() - b.term(k, h).unwrap()).abs() < 1e-9, "theta={theta} h={h} k={k}");
            }
        }
    }
}

#[test]
fn war_rejects_bad_arguments() {
    let w = war2();
    let y = DMatrix::identity(2, 2);
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(w.feld_table(&indefinite, &y, &[1]).is_err());
    assert!(w.feld_table(&y, &indefinite, &[1]).is_err());
    assert!(WarParams::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), 3.0).is_err());
    assert!(WarParams::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn arg_compound_closed_form(beta in 0.0f64..0.99, u in 0.0f64..10.0, h in 0usize..=12) {
        let a = ArgParams::new(beta, 1.0).unwrap();
        let mut v = u;
        for _ in 0..h {
            v = a.a(v);
        }
        prop_assert!((a.compound_a(u, h) - v).abs() <= 1e-12);
        prop_assert!((arg_closed_compound(beta, u, h) - v).abs() <= 1e-12);
    }

    #[test]
    fn war_terms_nonnegative(
        l in proptest::collection::vec(-1.0f64..1.0, 3),
        r in proptest::collection::vec(-2.0f64..2.0, 3),
        h in 1usize..=5,
    ) {
        let w = war2();
        let lo = DMatrix::from_row_slice(2, 2, &[l[0], 0.0, l[1], l[2]]);
        let ro = DMatrix::from_row_slice(2, 2, &[r[0], 0.0, r[1], r[2]]);
        let g = &lo * lo.transpose();
        let y = &ro * ro.transpose();
        let t = w.feld_table(&g, &y, &[h]).unwrap();
        prop_assert!(t.min_value() >= -1e-10);
        prop_assert!(t.max_relative_residual() <= 1e-10);
    }
}
