//! Small numeric helpers shared by the probes.

use alloc::vec::Vec;

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// `n` evenly spaced points of [0,1), starting at 0.
pub fn unit_grid(n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |i| i as f64 / n as f64)
}

/// Deterministic low-discrepancy points of the unit square (additive
/// recurrence on the plastic number).
pub fn r2_points(count: usize) -> Vec<(f64, f64)> {
    const G: f64 = 1.324_717_957_244_746;
    let a1 = 1.0 / G;
    let a2 = 1.0 / (G * G);
    (0..count)
        .map(|i| {
            let i = i as f64;
            (crate::torus::frac(0.5 + a1 * i), crate::torus::frac(0.5 + a2 * i))
        })
        .collect()
}

/// Bisection for a root of `f` on `[lo, hi]` with a sign change.
pub fn bisect(mut lo: f64, mut hi: f64, iters: usize, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let pts: Vec<_> = (0..10).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let (s, c) = linear_fit(&pts).unwrap();
        assert!((s + 0.5).abs() < 1e-14 && (c - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(1.0, 2.0, 60, |x| x * x - 2.0);
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-15);
    }
}
