//! Even bump functions with a flat plateau and a near-trapezoidal slope.
//!
//! On the transition band `[plateau, support]` the derivative is a constant
//! negative slope with septic smoothstep ramps at both ends, so φ is C⁴ and
//! `max|φ′|` only slightly exceeds the average slope `1/(support − plateau)`.

/// Fraction of the transition band used by each ramp of φ′.
const RAMP_FRACTION: f64 = 0.04;

/// Septic smoothstep on [0,1]; derivatives up to third order vanish at both ends.
fn smooth(u: f64) -> f64 {
    let u2 = u * u;
    u2 * u2 * (35.0 - 84.0 * u + 70.0 * u2 - 20.0 * u2 * u)
}

/// Antiderivative of [`smooth`] vanishing at 0; equals 1/2 at 1.
fn smooth_integral(u: f64) -> f64 {
    let u2 = u * u;
    u2 * u2 * u * (7.0 - 14.0 * u + 10.0 * u2 - 2.5 * u2 * u)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BumpProfile {
    /// φ = 1 on `|t| ≤ plateau`.
    pub plateau: f64,
    /// φ = 0 on `|t| ≥ support`.
    pub support: f64,
    /// The bound the slope is required to respect, `|φ′| < slope_bound`.
    pub slope_bound: f64,
    ramp: f64,
    slope: f64,
}

impl BumpProfile {
    /// Profile with the given plateau and support radii.
    pub fn new(plateau: f64, support: f64) -> Self {
        assert!(0.0 <= plateau && plateau < support, "bump needs 0 <= plateau < support");
        let w = support - plateau;
        let slope = 1.0 / (w * (1.0 - RAMP_FRACTION));
        BumpProfile { plateau, support, slope_bound: slope * 1.08, ramp: RAMP_FRACTION * w, slope }
    }

    /// φ = 1 on |t| ≤ 1/8, φ = 0 on |t| ≥ 1/4, −9 < φ′ ≤ 0.
    pub fn standard() -> Self {
        BumpProfile { slope_bound: 9.0, ..BumpProfile::new(0.125, 0.25) }
    }

    /// Exact maximum of |φ′|.
    pub fn peak_slope(&self) -> f64 {
        self.slope
    }

    /// Mass of the normalized slope profile on `[plateau, t]`.
    fn drop(&self, t: f64) -> f64 {
        let r = self.ramp;
        let w = self.support - self.plateau;
        let x = t - self.plateau;
        if x <= 0.0 {
            0.0
        } else if x < r {
            r * smooth_integral(x / r)
        } else if x <= w - r {
            0.5 * r + (x - r)
        } else if x < w {
            (w - r) - r * smooth_integral((w - x) / r)
        } else {
            w - r
        }
    }

    fn profile(&self, t: f64) -> f64 {
        let r = self.ramp;
        let w = self.support - self.plateau;
        let x = t - self.plateau;
        if x <= 0.0 || x >= w {
            0.0
        } else if x < r {
            smooth(x / r)
        } else if x <= w - r {
            1.0
        } else {
            smooth((w - x) / r)
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= self.plateau {
            1.0
        } else if a >= self.support {
            0.0
        } else {
            (1.0 - self.slope * self.drop(a)).clamp(0.0, 1.0)
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let a = t.abs();
        let d = -self.slope * self.profile(a);
        if t < 0.0 {
            -d
        } else {
            d
        }
    }

    /// Value and derivative together.
    pub fn eval_with_deriv(&self, t: f64) -> (f64, f64) {
        (self.eval(t), self.deriv(t))
    }
}

impl Default for BumpProfile {
    fn default() -> Self {
        BumpProfile::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let b = BumpProfile::standard();
        assert_eq!(b.eval(0.0), 1.0);
        assert_eq!(b.eval(0.125), 1.0);
        assert_eq!(b.eval(0.25), 0.0);
        assert_eq!(b.deriv(0.25), 0.0);
        assert_eq!(b.eval(-0.3), 0.0);
        assert!((b.eval(0.1875) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn slope_window() {
        let b = BumpProfile::standard();
        let n = 100_000;
        let mut peak = 0.0f64;
        for i in 1..n {
            let t = 0.125 + 0.125 * i as f64 / n as f64;
            let d = b.deriv(t);
            assert!(d < 0.0 && d > -8.8, "t={t} d={d}");
            peak = peak.max(-d);
        }
        assert!((peak - b.peak_slope()).abs() < 1e-9);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let b = BumpProfile::new(0.02, 0.3);
        let h = 1e-6;
        for i in 0..400 {
            let t = -0.35 + 0.7 * i as f64 / 400.0;
            let fd = (b.eval(t + h) - b.eval(t - h)) / (2.0 * h);
            assert!((fd - b.deriv(t)).abs() < 1e-5, "t={t}");
        }
    }
}
