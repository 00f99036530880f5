//! Real 2×2 matrices.

use core::ops::Mul;

use crate::torus::LiftPoint;

/// Row-major real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    /// Matrix with the given columns.
    pub fn from_columns(c1: LiftPoint, c2: LiftPoint) -> Self {
        Mat2::new(c1.x, c2.x, c1.y, c2.y)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    pub fn apply(&self, v: LiftPoint) -> LiftPoint {
        LiftPoint::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    /// Solves `self · x = v`.
    pub fn solve(&self, v: LiftPoint) -> Option<LiftPoint> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(LiftPoint::new(
            (self.d * v.x - self.b * v.y) / det,
            (self.a * v.y - self.c * v.x) / det,
        ))
    }

    pub fn sub_identity(&self) -> Mat2 {
        Mat2::new(self.a - 1.0, self.b, self.c, self.d - 1.0)
    }

    pub fn scaled(&self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Eigenvalues when real, largest modulus last.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        let t = self.trace();
        let det = self.det();
        let disc = t * t - 4.0 * det;
        if disc < 0.0 {
            return None;
        }
        let s = libm::sqrt(disc);
        let big = if t >= 0.0 { (t + s) / 2.0 } else { (t - s) / 2.0 };
        if big == 0.0 {
            return Some((0.0, 0.0));
        }
        // The small root from Vieta avoids cancellation.
        let small = det / big;
        if small.abs() <= big.abs() {
            Some((small, big))
        } else {
            Some((big, small))
        }
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl Mul<LiftPoint> for Mat2 {
    type Output = LiftPoint;
    fn mul(self, v: LiftPoint) -> LiftPoint {
        self.apply(v)
    }
}
