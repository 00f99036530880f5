//! Points on the torus and its universal cover, deck translations and
//! projective directions.

use core::f64::consts::{FRAC_PI_2, PI};
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A point of the universal cover R².
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LiftPoint {
    pub x: f64,
    pub y: f64,
}

impl LiftPoint {
    pub const ORIGIN: LiftPoint = LiftPoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        LiftPoint { x, y }
    }

    pub fn dot(self, o: LiftPoint) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, o: LiftPoint) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn normalized(self) -> LiftPoint {
        let n = self.norm();
        LiftPoint::new(self.x / n, self.y / n)
    }

    /// Max-norm, cheap test for "outside a box".
    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Translate by a deck vector.
    pub fn shift(self, n: DeckVector) -> LiftPoint {
        LiftPoint::new(self.x + n.n1 as f64, self.y + n.n2 as f64)
    }

    /// Componentwise floor, as a deck vector.
    pub fn floor(self) -> DeckVector {
        DeckVector::new(libm::floor(self.x) as i64, libm::floor(self.y) as i64)
    }

    /// Nearest lattice point (halves round away from zero).
    pub fn round(self) -> DeckVector {
        DeckVector::new(libm::round(self.x) as i64, libm::round(self.y) as i64)
    }

    /// The deck translate nearest the origin, coordinates in `[−1/2, 1/2]`.
    pub fn reduced(self) -> LiftPoint {
        self - self.round().as_point()
    }
}

impl Add for LiftPoint {
    type Output = LiftPoint;
    fn add(self, o: LiftPoint) -> LiftPoint {
        LiftPoint::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for LiftPoint {
    fn add_assign(&mut self, o: LiftPoint) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for LiftPoint {
    type Output = LiftPoint;
    fn sub(self, o: LiftPoint) -> LiftPoint {
        LiftPoint::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for LiftPoint {
    fn sub_assign(&mut self, o: LiftPoint) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for LiftPoint {
    type Output = LiftPoint;
    fn mul(self, s: f64) -> LiftPoint {
        LiftPoint::new(self.x * s, self.y * s)
    }
}

impl Mul<LiftPoint> for f64 {
    type Output = LiftPoint;
    fn mul(self, p: LiftPoint) -> LiftPoint {
        p * self
    }
}

impl Neg for LiftPoint {
    type Output = LiftPoint;
    fn neg(self) -> LiftPoint {
        LiftPoint::new(-self.x, -self.y)
    }
}

/// Canonical representative of a class in R²/Z², coordinates in [0,1).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

impl TorusPoint {
    /// Reduces arbitrary coordinates mod 1.
    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint { x: frac(x), y: frac(y) }
    }

    /// The representative itself, as a point of R².
    pub fn lift(self) -> LiftPoint {
        LiftPoint::new(self.x, self.y)
    }
}

/// An element of Z² acting on R² by translation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeckVector {
    pub n1: i64,
    pub n2: i64,
}

impl DeckVector {
    pub const ZERO: DeckVector = DeckVector { n1: 0, n2: 0 };
    pub const E1: DeckVector = DeckVector { n1: 1, n2: 0 };
    pub const E2: DeckVector = DeckVector { n1: 0, n2: 1 };

    pub const fn new(n1: i64, n2: i64) -> Self {
        DeckVector { n1, n2 }
    }

    pub fn as_point(self) -> LiftPoint {
        LiftPoint::new(self.n1 as f64, self.n2 as f64)
    }
}

impl Add for DeckVector {
    type Output = DeckVector;
    fn add(self, o: DeckVector) -> DeckVector {
        DeckVector::new(self.n1 + o.n1, self.n2 + o.n2)
    }
}

impl Sub for DeckVector {
    type Output = DeckVector;
    fn sub(self, o: DeckVector) -> DeckVector {
        DeckVector::new(self.n1 - o.n1, self.n2 - o.n2)
    }
}

impl Neg for DeckVector {
    type Output = DeckVector;
    fn neg(self) -> DeckVector {
        DeckVector::new(-self.n1, -self.n2)
    }
}

/// A line through the origin, stored as its angle in [0, π).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Direction {
    theta: f64,
}

impl Direction {
    pub fn new(theta: f64) -> Self {
        let mut t = libm::fmod(theta, PI);
        if t < 0.0 {
            t += PI;
        }
        if t >= PI {
            t = 0.0;
        }
        Direction { theta: t }
    }

    /// Direction spanned by a nonzero vector.
    pub fn from_vector(v: LiftPoint) -> Self {
        Direction::new(libm::atan2(v.y, v.x))
    }

    pub fn theta(self) -> f64 {
        self.theta
    }

    /// Unit representative (cos θ, sin θ).
    pub fn unit(self) -> LiftPoint {
        LiftPoint::new(libm::cos(self.theta), libm::sin(self.theta))
    }

    /// Signed angle in (−π/2, π/2] from `self` to `other`.
    pub fn signed_offset(self, other: Direction) -> f64 {
        let mut d = other.theta - self.theta;
        if d > FRAC_PI_2 {
            d -= PI;
        } else if d <= -FRAC_PI_2 {
            d += PI;
        }
        d
    }
}

pub(crate) fn frac(v: f64) -> f64 {
    let r = v - libm::floor(v);
    // v slightly below an integer can round up to exactly 1.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduction R² → T².
pub fn project(p: LiftPoint) -> TorusPoint {
    TorusPoint::new(p.x, p.y)
}

/// The lift of `p` closest to `base`.
///
/// Exact ties keep the representative on the positive side of `base`, so
/// each coordinate of `result − base` lies in (−1/2, 1/2].
pub fn lift_near(p: TorusPoint, base: LiftPoint) -> LiftPoint {
    let near = |v: f64, b: f64| {
        let d = v - b;
        let d = d - libm::ceil(d - 0.5);
        b + d
    };
    LiftPoint::new(near(p.x, base.x), near(p.y, base.y))
}

/// Flat distance on T².
pub fn torus_dist(p: TorusPoint, q: TorusPoint) -> f64 {
    let w = |d: f64| {
        let d = d.abs();
        d.min(1.0 - d)
    };
    libm::hypot(w(p.x - q.x), w(p.y - q.y))
}

/// Angle between two lines, in [0, π/2].
pub fn direction_dist(d1: Direction, d2: Direction) -> f64 {
    let d = (d1.theta - d2.theta).abs();
    d.min(PI - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn project_examples() {
        assert_eq!(project(LiftPoint::new(1.25, -0.5)), TorusPoint { x: 0.25, y: 0.5 });
        assert_eq!(project(LiftPoint::new(3.0, 7.0)), TorusPoint { x: 0.0, y: 0.0 });
        let p = project(LiftPoint::new(-1e-18, -0.0));
        assert!(p.x < 1.0 && p.y == 0.0);
    }

    #[test]
    fn lift_near_examples() {
        let r = lift_near(TorusPoint::new(0.9, 0.1), LiftPoint::ORIGIN);
        assert_abs_diff_eq!(r.x, -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(r.y, 0.1, epsilon = 1e-15);
        let r = lift_near(TorusPoint::new(0.0, 0.0), LiftPoint::new(5.4, -2.2));
        assert_eq!(r, LiftPoint::new(5.0, -2.0));
        let r = lift_near(TorusPoint::new(0.5, 0.5), LiftPoint::ORIGIN);
        assert_eq!(r, LiftPoint::new(0.5, 0.5));
    }

    #[test]
    fn distances() {
        assert_abs_diff_eq!(
            torus_dist(TorusPoint::new(0.95, 0.0), TorusPoint::new(0.05, 0.0)),
            0.1,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            torus_dist(TorusPoint::new(0.0, 0.0), TorusPoint::new(0.5, 0.5)),
            core::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        let d = direction_dist(Direction::new(0.05), Direction::new(3.10));
        assert_abs_diff_eq!(d, PI - 3.05, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.09159, epsilon = 1e-5);
        assert_abs_diff_eq!(
            direction_dist(Direction::new(0.0), Direction::new(FRAC_PI_2)),
            FRAC_PI_2
        );
    }

    #[test]
    fn direction_normalizes() {
        assert_abs_diff_eq!(Direction::new(-0.1).theta(), PI - 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(Direction::new(PI + 0.2).theta(), 0.2, epsilon = 1e-15);
        let d = Direction::from_vector(LiftPoint::new(-1.0, -1.0));
        assert_abs_diff_eq!(d.theta(), PI / 4.0, epsilon = 1e-15);
    }
}
