//! A Lebesgue-preserving degree-2 circle map Ψ with Ψ′(0) > 2.
//!
//! Ψ equals `T(x) = 2x` except on `U₁ = (−1/8, 1/8)` and `U₂ = (3/8, 5/8)`,
//! where it is `φ₁∘T` and `φ₂∘T`. The profiles fix ±1/6 to first order,
//! φ₁ is a cubic Hermite arc, and φ₂ solves `dx/dy + (φ₁⁻¹)′(y) = 2`.

use alloc::vec::Vec;

use super::ModelError;

/// φ₁′(0).
pub const PHI1_SLOPE_AT_ZERO: f64 = 1.2;

/// Half-width of the interval where φ₁, φ₂ differ from the identity.
const HALF: f64 = 1.0 / 6.0;

/// Quadrature steps on `[0, 1/6]`; the step is below 1e-4.
const STEPS: usize = 2000;

/// The odd cubic arc through `φ(0) = 0, φ′(0) = slope, φ(h) = h, φ′(h) = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct HermiteArc {
    c3: f64,
    c2: f64,
    c1: f64,
}

impl HermiteArc {
    pub(crate) fn new(slope: f64) -> Self {
        HermiteArc { c3: slope - 1.0, c2: 2.0 - 2.0 * slope, c1: slope }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        let a = x.abs();
        if a >= HALF {
            return x;
        }
        let s = a / HALF;
        let v = HALF * s * (self.c1 + s * (self.c2 + s * self.c3));
        if x < 0.0 {
            -v
        } else {
            v
        }
    }

    pub(crate) fn deriv(&self, x: f64) -> f64 {
        let a = x.abs();
        if a >= HALF {
            return 1.0;
        }
        let s = a / HALF;
        self.c1 + s * (2.0 * self.c2 + 3.0 * self.c3 * s)
    }

    /// Smallest slope on `[0, 1/6]`.
    fn min_deriv(&self) -> f64 {
        let mut m = self.deriv(0.0).min(self.deriv(HALF * 0.999_999_999));
        if self.c3 != 0.0 {
            let s = -self.c2 / (3.0 * self.c3);
            if (0.0..1.0).contains(&s) {
                m = m.min(self.deriv(s * HALF));
            }
        }
        m
    }

    /// Inverse by safeguarded Newton on the monotone arc.
    pub(crate) fn inverse(&self, y: f64) -> f64 {
        let a = y.abs();
        if a >= HALF {
            return y;
        }
        let (mut lo, mut hi) = (0.0, HALF);
        let mut x = a / self.c1;
        for _ in 0..60 {
            let r = self.eval(x) - a;
            if r == 0.0 {
                break;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut nx = x - r / self.deriv(x);
            if !(nx > lo && nx < hi) {
                nx = 0.5 * (lo + hi);
            }
            if (nx - x).abs() <= 1e-17 {
                x = nx;
                break;
            }
            x = nx;
        }
        if y < 0.0 {
            -x
        } else {
            x
        }
    }
}

#[derive(Clone, Debug)]
pub struct CirclePair {
    phi1: HermiteArc,
    slope0: f64,
    /// `(y_i, x_i = φ₂⁻¹(y_i), dx/dy at y_i)` on a uniform grid of `[0, 1/6]`.
    nodes: Vec<(f64, f64, f64)>,
}

/// Builds the pair with `φ₁′(0) = 1.2`.
pub fn build_circle_pair() -> Result<CirclePair, ModelError> {
    CirclePair::with_slope(PHI1_SLOPE_AT_ZERO)
}

impl CirclePair {
    /// The pair for a given `φ₁′(0) > 1`.
    pub fn with_slope(slope0: f64) -> Result<Self, ModelError> {
        if !(slope0 > 1.0 && slope0 < 3.0) {
            return Err(ModelError::InvalidParameter("phi1 slope at 0 must lie in (1, 3)"));
        }
        let phi1 = HermiteArc::new(slope0);
        let min_slope = phi1.min_deriv();
        if min_slope <= 0.0 {
            return Err(ModelError::InvalidParameter("phi1 is not strictly increasing"));
        }
        let rhs = |y: f64| 2.0 - 1.0 / phi1.deriv(phi1.inverse(y));
        let h = HALF / STEPS as f64;
        let mut nodes = Vec::with_capacity(STEPS + 1);
        let mut x = 0.0;
        for i in 0..=STEPS {
            let y = if i == STEPS { HALF } else { i as f64 * h };
            let f = rhs(y);
            if !(f > 0.0) {
                return Err(ModelError::IntegrationFailure { y });
            }
            nodes.push((y, x, f));
            if i < STEPS {
                // The slope depends on y alone, so an RK4 step is Simpson's rule.
                let mid = rhs(y + 0.5 * h);
                let end = rhs(y + h);
                if !(mid > 0.0) {
                    return Err(ModelError::IntegrationFailure { y: y + 0.5 * h });
                }
                x += h / 6.0 * (f + 4.0 * mid + end);
            }
        }
        Ok(CirclePair { phi1, slope0, nodes })
    }

    pub fn phi1_slope_at_zero(&self) -> f64 {
        self.slope0
    }

    pub fn phi1(&self, x: f64) -> f64 {
        self.phi1.eval(x)
    }

    pub fn phi1_deriv(&self, x: f64) -> f64 {
        self.phi1.deriv(x)
    }

    pub fn phi1_inv(&self, y: f64) -> f64 {
        self.phi1.inverse(y)
    }

    pub(crate) fn arc(&self) -> HermiteArc {
        self.phi1
    }

    /// φ₂⁻¹ from the integrated table (cubic Hermite between nodes).
    pub fn phi2_inv(&self, y: f64) -> f64 {
        let a = y.abs();
        if a >= HALF {
            return y;
        }
        let (x, _) = self.table_eval(a);
        if y < 0.0 {
            -x
        } else {
            x
        }
    }

    fn interval(&self, a: f64) -> usize {
        let i = (a / HALF * STEPS as f64) as usize;
        i.min(STEPS - 1)
    }

    /// `(x, dx/dy)` of the interpolated table at `0 ≤ y < 1/6`.
    fn table_eval(&self, y: f64) -> (f64, f64) {
        let i = self.interval(y);
        let (y0, x0, d0) = self.nodes[i];
        let (y1, x1, d1) = self.nodes[i + 1];
        let h = y1 - y0;
        let s = (y - y0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let x = h00 * x0 + h10 * h * d0 + h01 * x1 + h11 * h * d1;
        let dh00 = (6.0 * s2 - 6.0 * s) / h;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = (-6.0 * s2 + 6.0 * s) / h;
        let dh11 = 3.0 * s2 - 2.0 * s;
        (x, dh00 * x0 + dh10 * d0 + dh01 * x1 + dh11 * d1)
    }

    /// `y = φ₂(x)` with `(dx/dy)(y)`, for `0 ≤ x < 1/6`.
    fn phi2_solve(&self, x: f64) -> (f64, f64) {
        let k = self.nodes.partition_point(|n| n.1 <= x).clamp(1, STEPS) - 1;
        let (mut lo, mut hi) = (self.nodes[k].0, self.nodes[k + 1].0);
        let mut y = lo + (x - self.nodes[k].1) / self.nodes[k].2;
        for _ in 0..60 {
            let (xv, d) = self.table_eval(y.clamp(0.0, HALF * (1.0 - 1e-16)));
            let r = xv - x;
            if r > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let mut ny = y - r / d;
            if !(ny >= lo && ny <= hi) {
                ny = 0.5 * (lo + hi);
            }
            if (ny - y).abs() <= 1e-18 || r == 0.0 {
                y = ny;
                break;
            }
            y = ny;
        }
        let (_, d) = self.table_eval(y.clamp(0.0, HALF * (1.0 - 1e-16)));
        (y, d)
    }

    pub fn phi2(&self, x: f64) -> f64 {
        let a = x.abs();
        if a >= HALF {
            return x;
        }
        let (y, _) = self.phi2_solve(a);
        if x < 0.0 {
            -y
        } else {
            y
        }
    }

    pub fn phi2_deriv(&self, x: f64) -> f64 {
        if x.abs() >= HALF {
            return 1.0;
        }
        1.0 / self.phi2_solve(x.abs()).1
    }

    /// Ψ on the lift; `Ψ(t + 1) = Ψ(t) + 2`.
    pub fn psi(&self, t: f64) -> f64 {
        let (n, f) = split(t);
        2.0 * n
            + match region(f) {
                Region::U1 => self.phi1(2.0 * f),
                Region::U2 => 1.0 + self.phi2(2.0 * f - 1.0),
                Region::Linear => 2.0 * f,
            }
    }

    pub fn psi_deriv(&self, t: f64) -> f64 {
        let (_, f) = split(t);
        match region(f) {
            Region::U1 => 2.0 * self.phi1_deriv(2.0 * f),
            Region::U2 => 2.0 * self.phi2_deriv(2.0 * f - 1.0),
            Region::Linear => 2.0,
        }
    }

    /// The two points of `[0, 1)` mapped to `y` mod 1.
    pub fn psi_preimages(&self, y: f64) -> [f64; 2] {
        let y = crate::torus::frac(y);
        let inv = |v: f64| {
            if v.abs() < 0.25 {
                0.5 * self.phi1_inv(v)
            } else if (v - 1.0).abs() < 0.25 {
                0.5 * (self.phi2_inv(v - 1.0) + 1.0)
            } else {
                0.5 * v
            }
        };
        let mut out = [inv(y), inv(y + 1.0)];
        if y >= 0.75 {
            out[1] = inv(y - 1.0);
        }
        out.map(crate::torus::frac)
    }

    /// `|1/Ψ′(a) + 1/Ψ′(b) − 1|` over the preimage pairs of `samples`
    /// evenly spaced points.
    pub fn conservativity_residual(&self, samples: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..samples {
            let y = (i as f64 + 0.5) / samples as f64;
            let [a, b] = self.psi_preimages(y);
            let r = 1.0 / self.psi_deriv(a) + 1.0 / self.psi_deriv(b) - 1.0;
            worst = worst.max(r.abs());
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Region {
    U1,
    U2,
    Linear,
}

/// `t = n + f` with `f ∈ [−1/8, 7/8)`.
pub(crate) fn split(t: f64) -> (f64, f64) {
    let n = libm::floor(t + 0.125);
    (n, t - n)
}

pub(crate) fn region(f: f64) -> Region {
    if f.abs() < 0.125 {
        Region::U1
    } else if (f - 0.5).abs() < 0.125 {
        Region::U2
    } else {
        Region::Linear
    }
}
