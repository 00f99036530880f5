use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use proptest::prelude::*;
use toral_core::hyperbolicity::{grid_points, integrate_leaf, Bundle};
use toral_core::linear::IntMatrix2;
use toral_core::models::{build_mane_sc, choose_k, Endomorphism, LinearModel, ManeSc};
use toral_core::semiconj::{
    c_h_bound, conj_residual_at, fiber_interval, lambda_membership, solve_h, SemiConjugacy, PLATEAU_TOL,
};
use toral_core::torus::{project, DeckVector, LiftPoint};

fn g0() -> &'static ManeSc {
    static G: OnceLock<ManeSc> = OnceLock::new();
    G.get_or_init(|| {
        let cert = choose_k(2.0 - SQRT_2, 2.0 + SQRT_2, -2.6, 1.0).unwrap();
        build_mane_sc(IntMatrix2::new(3, 1, 1, 1), cert.params).unwrap()
    })
}

fn h0() -> &'static SemiConjugacy<'static, ManeSc> {
    static H: OnceLock<SemiConjugacy<'static, ManeSc>> = OnceLock::new();
    H.get_or_init(|| solve_h(g0(), 60, 30).unwrap())
}

/// Sample points concentrated where the perturbation lives.
fn box_samples(m: &dyn Endomorphism, n: usize) -> Vec<LiftPoint> {
    m.perturbation_boxes().iter().flat_map(|b| b.grid(n)).collect()
}

fn monotone(values: &[f64], strict: bool, slack: f64) -> bool {
    let ok = |s: f64| values.windows(2).all(|w| if strict { s * (w[1] - w[0]) > 0.0 } else { s * (w[1] - w[0]) >= -slack });
    ok(1.0) || ok(-1.0)
}

#[test]
fn linear_model_has_identity_semiconjugacy() {
    let m = LinearModel::new(IntMatrix2::new(3, 1, 1, 1)).unwrap();
    let h = solve_h(&m, 20, 10).unwrap();
    for p in grid_points(12) {
        assert!((h.eval(p).unwrap() - p).norm() < 1e-15);
    }
}

#[test]
fn estimated_constant_respects_the_bound() {
    let h = h0();
    assert!(h.c_h_est <= c_h_bound(&h.spec, h.delta_norm) + h.trunc_bound);
    assert!(h.c_h_est > 0.0);
}

#[test]
fn truncation_error_tracks_the_bound() {
    let g = g0();
    let h = solve_h(g, 4, 2).unwrap();
    let res = box_samples(g, 30).into_iter().map(|p| conj_residual_at(&h, p).unwrap()).fold(0.0, f64::max);
    assert!(res <= 10.0 * h.trunc_bound, "residual {res:e}, bound {:e}", h.trunc_bound);
    assert!(res >= h.trunc_bound / 10.0, "residual {res:e}, bound {:e}", h.trunc_bound);
}

#[test]
fn unstable_coordinate_is_monotone_along_e2_leaves() {
    let h = h0();
    for x in [LiftPoint::ORIGIN, LiftPoint::new(0.31, 0.77), LiftPoint::new(0.5, 0.5)] {
        let leaf = integrate_leaf(g0(), x, Bundle::E2, 1.0, 1e-3).unwrap();
        let u: Vec<f64> = leaf.points.iter().map(|&p| h.eval_eigen(p).unwrap().1).collect();
        assert!(monotone(&u, false, 1e-13), "H^u not monotone on the E2 leaf through {x:?}");
    }
}

#[test]
fn stable_coordinate_is_strictly_monotone_along_e1_leaves() {
    let h = h0();
    for x in [LiftPoint::ORIGIN, LiftPoint::new(0.31, 0.77), LiftPoint::new(0.5, 0.5)] {
        let leaf = integrate_leaf(g0(), x, Bundle::E1, 1.0, 1e-3).unwrap();
        let s: Vec<f64> = leaf.points.iter().map(|&p| h.eval_eigen(p).unwrap().0).collect();
        assert!(monotone(&s, true, 0.0), "H^s not strictly monotone on the E1 leaf through {x:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugacy_equation_holds(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        prop_assert!(conj_residual_at(h0(), LiftPoint::new(x, y)).unwrap() < 1e-10);
    }

    #[test]
    fn deck_equivariance_is_exact(x in 0.0f64..1.0, y in 0.0f64..1.0, n1 in -500i64..500, n2 in -500i64..500) {
        let d = h0().deck_difference(LiftPoint::new(x, y), DeckVector::new(n1, n2)).unwrap();
        prop_assert!(d.norm() < 1e-10);
    }

    #[test]
    fn fibers_through_lambda_points_are_trivial(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let p = LiftPoint::new(x, y);
        prop_assume!(lambda_membership(h0(), project(p), 1e-5).unwrap());
        let f = fiber_interval(h0(), p, 0.01).unwrap();
        prop_assert!(f.diameter < PLATEAU_TOL, "diameter {}", f.diameter);
    }
}
