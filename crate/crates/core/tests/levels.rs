mod common;

use common::points::{self, flat2, flat3, unflat2, unflat3};
use common::reference::{self, level2_point, level3_point};
use common::{central_gradient, rel_err, Draws};
use injcap::level1::{gamma1, psi1, solve_nu1};
use injcap::level2::{self, closed_form_r2, gamma_q_partial, grad_psi2, grad_psi2_partial, psi2_partial, psi2_value};
use injcap::level3::{closed_form_r3, grad_psi3, psi3_full, psi3_value};
use injcap::model::{validate, AuxParams, EvalPoint, LiftingParams, QuadConfig};
use proptest::prelude::*;

fn cfg(n: usize) -> QuadConfig {
    QuadConfig { nodes_single: n, nodes_inner: n, nodes_outer: n, ..QuadConfig::default() }
}

#[test]
fn level2_gradient_matches_differences() {
    let cfg = cfg(48);
    let mut d = Draws::new(11);
    for _ in 0..20 {
        let p = points::level2(&mut d);
        let g = grad_psi2(&p, &cfg).unwrap();
        let fd = central_gradient(|x| psi2_value(&unflat2(p.alpha, x), &cfg).unwrap(), &flat2(&p), 1e-5);
        for k in 0..6 {
            assert!(rel_err(g[k], fd[k]) < 1e-5, "{k}: {} vs {} at {p:?}", g[k], fd[k]);
        }
    }
}

#[test]
fn level3_gradient_matches_differences() {
    let cfg = cfg(24);
    let mut d = Draws::new(12);
    for _ in 0..10 {
        let p = points::level3(&mut d);
        let g = grad_psi3(&p, &cfg).unwrap();
        let fd = central_gradient(|x| psi3_value(&unflat3(p.alpha, x), &cfg).unwrap(), &flat3(&p), 1e-5);
        for k in 0..9 {
            assert!(rel_err(g[k], fd[k]) < 1e-4, "{k}: {} vs {} at {p:?}", g[k], fd[k]);
        }
    }
}

#[test]
fn partial_gradient_matches_differences() {
    let mut d = Draws::new(13);
    for _ in 0..20 {
        let (alpha, c2, gp, nu) = (d.range(5.0, 8.0), d.range(0.3, 5.0), d.range(0.1, 0.6), d.range(0.05, 0.8));
        let g = grad_psi2_partial(alpha, c2, gp, nu).unwrap();
        let fd = central_gradient(|x| psi2_partial(alpha, x[0], x[1], x[2]).unwrap(), &[c2, gp, nu], 1e-6);
        for k in 0..3 {
            assert!(rel_err(g[k], fd[k]) < 1e-7, "{k}: {} vs {}", g[k], fd[k]);
        }
    }
}

#[test]
fn full_level2_reduces_to_partial() {
    let mut d = Draws::new(14);
    for _ in 0..10 {
        let (alpha, c2, gp, nu) = (d.range(5.0, 8.0), d.range(0.3, 5.0), d.range(0.1, 0.6), d.range(0.05, 0.8));
        let p = EvalPoint {
            alpha,
            lifting: LiftingParams::level2(0.0, 0.0, c2),
            aux: AuxParams { gamma_q: gamma_q_partial(c2), gamma_p: gp, nu },
        };
        let full = psi2_value(&p, &QuadConfig::default()).unwrap();
        assert!((full - psi2_partial(alpha, c2, gp, nu).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn partial_reduces_to_level1() {
    for &alpha in &[5.0, 6.5, 7.6477, 9.0] {
        let nu = solve_nu1(alpha).unwrap();
        let (_, gp) = gamma1(alpha, nu).unwrap();
        let partial = psi2_partial(alpha, 1e-4, gp, nu).unwrap();
        assert!((partial - psi1(alpha, nu).unwrap()).abs() < 1e-4, "alpha = {alpha}");
    }
}

#[test]
fn level3_collapses_to_level2() {
    let cfg = cfg(40);
    let mut d = Draws::new(15);
    for _ in 0..10 {
        let p2pt = points::level2(&mut d);
        let l = &p2pt.lifting;
        let c3 = d.range(0.5, 10.0);
        let p3pt =
            EvalPoint { lifting: LiftingParams::level3(l.p[0], l.p[0], l.q[0], l.q[0], l.c[0], c3), ..p2pt.clone() };
        let a = psi2_value(&p2pt, &cfg).unwrap();
        let b = psi3_value(&p3pt, &cfg).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn reference_points_are_nearly_stationary() {
    let r2 = level2::psi2_full(&level2_point(), &QuadConfig::default()).unwrap();
    assert!(r2.psi.abs() < 1e-3);
    assert!(r2.residual_norm() < 5e-3, "{:?}", r2.grad);
    let r3 = psi3_full(&level3_point(), &QuadConfig::default()).unwrap();
    assert!(r3.psi.abs() < 5e-3);
}

#[test]
fn closed_forms_match_reference() {
    let [gq, gp, _, p2, q2, c2] = reference::LEVEL2;
    let (g, c, gpc) = closed_form_r2(p2, q2).unwrap();
    for (got, want) in [(g, gq), (c, c2), (gpc, gp)] {
        assert!((got / want - 1.0).abs() < 3e-3, "{got} vs {want}");
    }
    assert!((4.0 * g * gpc - 1.0).abs() < 1e-15);
    let [gq, gp, _, p2, p3, q2, q3, c2, c3] = reference::LEVEL3;
    let (g, c, cc, gpc) = closed_form_r3(p2, p3, q2, q3).unwrap();
    for (got, want) in [(g, gq), (c, c2), (cc, c3), (gpc, gp)] {
        assert!((got / want - 1.0).abs() < 5e-3, "{got} vs {want}");
    }
    assert!((4.0 * g * gpc - 1.0).abs() < 1e-15);
}

#[test]
fn closed_form_r3_collapse_matches_r2_relation_for_gamma_q() {
    // with p3 -> 0 and q3 -> 0 at fixed ratio the sphere side reduces to level two
    let (p2, q2) = (0.7772, 0.1914);
    let (g2, c2, _) = closed_form_r2(p2, q2).unwrap();
    let e = 1e-9;
    let (g3, c3_2, _, _) = closed_form_r3(p2, e * p2, q2, e * q2).unwrap();
    assert!((g3 / g2 - 1.0).abs() < 1e-6);
    assert!((c3_2 / c2 - 1.0).abs() < 1e-6);
}

#[test]
fn invalid_points_are_reported() {
    let mut p = level3_point();
    p.lifting.p = vec![0.5, 0.7];
    let errs = validate(&p).unwrap_err();
    assert!(errs.iter().any(|v| v.field == "p3"));
    assert!(psi3_value(&p, &QuadConfig::default()).is_err());
    let mut p = level2_point();
    p.aux.gamma_q = 0.1;
    assert!(psi2_value(&p, &QuadConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn four_gamma_product_is_one_for_closed_forms(p2 in 0.05f64..0.99, q2 in 0.01f64..0.99) {
        if let Ok((g, _, gp)) = closed_form_r2(p2, q2) {
            prop_assert!((4.0 * g * gp - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn level2_value_is_finite_on_valid_points(seed in 1u64..u64::MAX) {
        let p = points::level2(&mut Draws::new(seed));
        prop_assert!(validate(&p).is_ok());
        prop_assert!(psi2_value(&p, &cfg(16)).unwrap().is_finite());
    }

    #[test]
    fn collapse_holds_for_any_c3(seed in 1u64..u64::MAX, c3 in 0.1f64..20.0) {
        let p2pt = points::level2(&mut Draws::new(seed));
        let l = &p2pt.lifting;
        let p3pt = EvalPoint { lifting: LiftingParams::level3(l.p[0], l.p[0], l.q[0], l.q[0], l.c[0], c3), ..p2pt.clone() };
        let c = cfg(16);
        prop_assert!((psi2_value(&p2pt, &c).unwrap() - psi3_value(&p3pt, &c).unwrap()).abs() < 1e-10);
    }
}
