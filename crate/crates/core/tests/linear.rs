use proptest::prelude::*;
use toral_core::linear::{
    classify, fixed_point_count, linear_image, smith_normal_form, torus_preimages_linear, CosetReps, IntMatrix2,
    LinearError, Sigma,
};
use toral_core::torus::{torus_dist, TorusPoint};

fn small_matrix() -> impl Strategy<Value = IntMatrix2> {
    (-6i64..=6, -6i64..=6, -6i64..=6, -6i64..=6).prop_map(|(a, b, c, d)| IntMatrix2::new(a, b, c, d))
}

/// Eigenvalue moduli from the characteristic polynomial, when both are real.
fn real_roots(m: IntMatrix2) -> Option<(f64, f64)> {
    let (t, d) = (m.trace() as f64, m.det() as f64);
    let disc = t * t - 4.0 * d;
    (disc >= 0.0).then(|| ((t - disc.sqrt()) / 2.0, (t + disc.sqrt()) / 2.0))
}

fn det_minus_identity(m: IntMatrix2, n: u32) -> i128 {
    let mut p = [[1i128, 0], [0, 1]];
    let a = [[m.a as i128, m.b as i128], [m.c as i128, m.d as i128]];
    for _ in 0..n {
        p = [
            [p[0][0] * a[0][0] + p[0][1] * a[1][0], p[0][0] * a[0][1] + p[0][1] * a[1][1]],
            [p[1][0] * a[0][0] + p[1][1] * a[1][0], p[1][0] * a[0][1] + p[1][1] * a[1][1]],
        ];
    }
    (p[0][0] - 1) * (p[1][1] - 1) - p[0][1] * p[1][0]
}

#[test]
fn classification_of_standard_examples() {
    let s = classify(IntMatrix2::new(3, 1, 1, 1)).unwrap();
    assert!((s.mu_s - (2.0 - 2f64.sqrt())).abs() < 1e-14);
    assert!((s.mu_u - (2.0 + 2f64.sqrt())).abs() < 1e-14);
    assert_eq!(s.degree, 2);
    assert_eq!(classify(IntMatrix2::new(2, 1, 1, 1)).unwrap().degree, 1);
    assert_eq!(classify(IntMatrix2::IDENTITY), Err(LinearError::NonHyperbolic));
    assert_eq!(classify(IntMatrix2::new(2, 0, 0, 2)), Err(LinearError::Expanding));
    assert_eq!(classify(IntMatrix2::new(1, 1, 1, 1)), Err(LinearError::Singular));
    // Complex pair of modulus √2.
    assert_eq!(classify(IntMatrix2::new(1, -1, 1, 1)), Err(LinearError::Expanding));
}

#[test]
fn lefschetz_counts_for_the_cat_like_matrix() {
    let a = IntMatrix2::new(3, 1, 1, 1);
    let counts: Vec<u64> = (1..=6).map(|n| fixed_point_count(a, n).unwrap()).collect();
    assert_eq!(counts, [1, 7, 31, 119, 431, 1519]);
}

proptest! {
    #[test]
    fn classify_agrees_with_characteristic_polynomial(m in small_matrix()) {
        match classify(m) {
            Ok(s) => {
                let (lo, hi) = real_roots(m).expect("hyperbolic with one stable direction has real roots");
                let (r_s, r_u) = if lo.abs() < 1.0 { (lo, hi) } else { (hi, lo) };
                prop_assert!((s.mu_s - r_s).abs() < 1e-9 * (1.0 + r_s.abs()));
                prop_assert!((s.mu_u - r_u).abs() < 1e-9 * (1.0 + r_u.abs()));
                prop_assert!(s.mu_s.abs() < 1.0 && s.mu_u.abs() > 1.0);
                for sigma in [Sigma::Stable, Sigma::Unstable] {
                    let v = s.unit(sigma);
                    let av = m.apply_real(v);
                    prop_assert!((av - v * s.eigenvalue(sigma)).norm() < 1e-9 * (1.0 + s.mu_u.abs()));
                }
            }
            Err(LinearError::Singular) => prop_assert_eq!(m.det(), 0),
            Err(_) => {
                if let Some((lo, hi)) = real_roots(m) {
                    let one_each = (lo.abs() < 1.0 - 1e-12) && (hi.abs() > 1.0 + 1e-12);
                    prop_assert!(!one_each, "rejected {:?} with roots {} {}", m, lo, hi);
                }
            }
        }
    }

    #[test]
    fn fixed_point_count_is_det_of_power_minus_identity(m in small_matrix(), n in 1u32..6) {
        let d = det_minus_identity(m, n);
        match fixed_point_count(m, n) {
            Ok(c) => prop_assert_eq!(c as u128, d.unsigned_abs()),
            Err(LinearError::Degenerate) => prop_assert_eq!(d, 0),
            Err(e) => prop_assert_eq!(e, LinearError::Overflow),
        }
    }

    #[test]
    fn coset_reps_are_a_transversal(m in small_matrix()) {
        prop_assume!(m.det() != 0);
        let reps = CosetReps::new(&m).unwrap();
        prop_assert_eq!(reps.len() as u64, m.det().unsigned_abs());
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..reps.len() {
            let r = reps.rep_wide(i);
            prop_assert_eq!(reps.index_of(r), i);
            prop_assert_eq!(reps.canonical(r), r);
            // Shifting by the image lattice keeps the coset.
            let shifted = (r.0 + 3 * m.a as i128 - 2 * m.b as i128, r.1 + 3 * m.c as i128 - 2 * m.d as i128);
            prop_assert_eq!(reps.index_of(shifted), i);
            seen.insert(r);
        }
        prop_assert_eq!(seen.len(), reps.len());
    }

    #[test]
    fn smith_form_divides_and_preserves_det(m in small_matrix()) {
        prop_assume!(m.det() != 0);
        let w = [[m.a as i128, m.b as i128], [m.c as i128, m.d as i128]];
        let s = smith_normal_form(w);
        prop_assert!(s.d1 > 0 && s.d2 % s.d1 == 0);
        prop_assert_eq!(s.d1 * s.d2, m.det().unsigned_abs() as i128);
        let det2 = |x: [[i128; 2]; 2]| x[0][0] * x[1][1] - x[0][1] * x[1][0];
        prop_assert_eq!(det2(s.u).abs(), 1);
        prop_assert_eq!(det2(s.v).abs(), 1);
    }

    #[test]
    fn linear_preimages_map_back(x in 0.0f64..1.0, y in 0.0f64..1.0, k in 0u32..6) {
        let a = IntMatrix2::new(3, 1, 1, 1);
        let p = TorusPoint::new(x, y);
        let pre = torus_preimages_linear(a, p, k).unwrap();
        prop_assert_eq!(pre.len(), 1usize << k);
        for q in &pre {
            let mut z = *q;
            for _ in 0..k {
                z = linear_image(a, z);
            }
            prop_assert!(torus_dist(z, p) < 1e-9);
        }
    }
}
