use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use proptest::prelude::*;
use toral_core::hyperbolicity::{check_cone_invariance, ConeParams};
use toral_core::linear::{classify, IntMatrix2};
use toral_core::models::{
    build_mane_cu, build_mane_sc, build_nonspecial, build_t3_example, choose_k, homotopy_defect, jacobian_defect,
    torus_preimages, CuParams, Endomorphism, LinearModel, ManeSc, NonSpecial, Point3, ShearRegion, DEFAULT_TILT,
};
use toral_core::periodic::{enumerate_periodic, SearchOptions, RESIDUAL_TOL};
use toral_core::torus::{torus_dist, TorusPoint};

const CAT: IntMatrix2 = IntMatrix2::new(3, 1, 1, 1);

fn g0() -> ManeSc {
    let cert = choose_k(2.0 - SQRT_2, 2.0 + SQRT_2, -2.6, 1.0).unwrap();
    build_mane_sc(CAT, cert.params).unwrap()
}

fn g1() -> NonSpecial {
    let b = g0();
    let r = ShearRegion::at_sink(&b, DEFAULT_TILT);
    build_nonspecial(b, r).unwrap()
}

type Model = Box<dyn Endomorphism + Send>;

fn models() -> &'static [Model] {
    static MODELS: OnceLock<Vec<Model>> = OnceLock::new();
    MODELS.get_or_init(build_models)
}

fn build_models() -> Vec<Model> {
    let s = classify(CAT).unwrap();
    vec![
        Box::new(LinearModel::new(CAT).unwrap()),
        Box::new(g0()),
        Box::new(g1()),
        Box::new(build_mane_cu(CAT, CuParams::with_center_derivative(s.mu_s, s.mu_u, 1.05)).unwrap()),
    ]
}

#[test]
fn lifts_are_homotopic_to_the_linear_part() {
    for m in models() {
        assert!(homotopy_defect(m.as_ref(), 40) < 1e-12, "{}", m.label());
    }
}

#[test]
fn derivatives_match_difference_quotients() {
    for m in models() {
        assert!(jacobian_defect(m.as_ref(), 40, 1e-6) < 1e-5, "{}", m.label());
    }
}

#[test]
fn mane_center_derivatives_at_the_fixed_points() {
    let g = g0();
    let [lo, sink, hi] = g.center_fixed_points();
    let (b, c) = g.eigen_jacobian(sink);
    assert!(b.abs() < 1e-15);
    assert!((c - (2.0 + SQRT_2 - 2.6)).abs() < 1e-12);
    for p in [lo, hi] {
        assert!(g.eigen_jacobian(p).1 > 1.0);
        assert!((g.lift(p) - p).norm() < 1e-12);
    }
}

#[test]
fn perturbed_models_keep_their_cones() {
    let g = g0();
    let cone = ConeParams::for_mane(&g.linear().spectrum, g.certificate()).unwrap();
    assert_eq!(check_cone_invariance(&g, &cone, 120), 0.0);
    let n = g1();
    assert_eq!(check_cone_invariance(&n, n.cone(), 120), 0.0);
}

#[test]
fn low_period_counts_exceed_lefschetz_by_two() {
    let g = g0();
    for (n, want) in [(1u32, 3usize), (2, 9), (3, 33)] {
        let orbits = enumerate_periodic(&g, n, &SearchOptions::default()).unwrap();
        assert_eq!(orbits.len(), want, "period {n}");
        assert!(orbits.iter().all(|o| o.residual < RESIDUAL_TOL));
    }
}

#[test]
fn t3_preimages_map_back() {
    let m = build_t3_example(CAT).unwrap();
    for p in [Point3::default(), Point3::new(0.3, 0.6, 0.25), Point3::new(0.9, 0.1, 0.5)] {
        let pre = m.preimages(p);
        assert_eq!(pre.len(), 4);
        for q in pre {
            let back = m.eval(q).reduce();
            let d = (back.x - p.x).abs().max((back.y - p.y).abs());
            let dt = (back.t - p.t).rem_euclid(1.0);
            assert!(d < 1e-9 && dt.min(1.0 - dt) < 1e-9, "{back:?} vs {p:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn preimages_map_back(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let p = TorusPoint::new(x, y);
        for m in models() {
            let pre = torus_preimages(m.as_ref(), p).unwrap();
            prop_assert_eq!(pre.len(), 2);
            prop_assert!(torus_dist(pre[0], pre[1]) > 1e-3);
            for q in pre {
                prop_assert!(torus_dist(m.torus_map(q), p) < 1e-10, "{}", m.label());
            }
        }
    }
}
