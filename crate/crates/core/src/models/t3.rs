//! The conservative map `Φ(z, t) = (Bz, Ψ_z(t))` of `T³ = T² × S¹`.
//!
//! The fiber maps interpolate between Ψ over `z = 0` and `T(t) = 2t` near
//! the boundary of a disc `V₀` around the fixed point of `B`: with a radial
//! weight `w(z)`, φ₁ is replaced by `φ₁,w = id + w(φ₁ − id)` and φ₂ by the
//! solution of the same slope equation against `φ₁,w`, so every fiber is
//! conservative on its own.

use alloc::vec::Vec;

use super::circle::{region, split, HermiteArc, Region};
use super::{build_circle_pair, CirclePair, Linearization, ModelError};
use crate::bump::BumpProfile;
use crate::linear::IntMatrix2;
use crate::torus::{frac, project, torus_dist, LiftPoint, TorusPoint};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Point3 { x, y, t }
    }

    pub fn base(&self) -> LiftPoint {
        LiftPoint::new(self.x, self.y)
    }

    /// Reduction mod Z³ into `[0,1)³`.
    pub fn reduce(&self) -> Point3 {
        Point3::new(frac(self.x), frac(self.y), frac(self.t))
    }
}

/// Radius of the disc V₀ around the fixed point.
const V0_RADIUS: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct Map3Model {
    lin: Linearization,
    circle: CirclePair,
    arc: HermiteArc,
    fade: BumpProfile,
    radius: f64,
}

/// Builds Φ over the special Anosov base `b`.
pub fn build_t3_example(b: IntMatrix2) -> Result<Map3Model, ModelError> {
    let lin = Linearization::new(b)?;
    // B must be injective on V₀: distinct points with a common image differ
    // by a non-integer point of B⁻¹Z².
    let reps = lin.cosets.reps();
    let mut gap = f64::INFINITY;
    for r in reps.iter().skip(1) {
        let q = project(lin.a_inv.apply(r.as_point()));
        gap = gap.min(torus_dist(q, TorusPoint::default()));
    }
    if 2.0 * V0_RADIUS >= gap {
        return Err(ModelError::InvalidParameter("B is not injective on the fade disc"));
    }
    let circle = build_circle_pair()?;
    Ok(Map3Model {
        lin,
        arc: circle.arc(),
        circle,
        fade: BumpProfile::new(0.25, 1.0),
        radius: V0_RADIUS,
    })
}

impl Map3Model {
    pub fn linear(&self) -> &Linearization {
        &self.lin
    }

    pub fn circle(&self) -> &CirclePair {
        &self.circle
    }

    pub fn fade_radius(&self) -> f64 {
        self.radius
    }

    /// Fade weight `w(z)` and its gradient.
    pub fn weight(&self, z: LiftPoint) -> (f64, LiftPoint) {
        let q = z - z.round().as_point();
        let r = q.norm();
        if r >= self.radius {
            return (0.0, LiftPoint::ORIGIN);
        }
        let (w, dw) = self.fade.eval_with_deriv(r / self.radius);
        if dw == 0.0 {
            return (w, LiftPoint::ORIGIN);
        }
        (w, q * (dw / (self.radius * r)))
    }

    fn phi1w(&self, w: f64, x: f64) -> (f64, f64) {
        let p = self.arc.eval(x);
        (x + w * (p - x), 1.0 + w * (self.arc.deriv(x) - 1.0))
    }

    fn phi1w_inv(&self, w: f64, y: f64) -> f64 {
        if w == 0.0 {
            return y;
        }
        if w == 1.0 {
            return self.arc.inverse(y);
        }
        let mut x = y;
        for _ in 0..60 {
            let (v, d) = self.phi1w(w, x);
            let step = (v - y) / d;
            x -= step;
            if step.abs() <= 1e-17 {
                break;
            }
        }
        x
    }

    /// `u` with `2 φ₁,w(u) − u = x`, so that `φ₂,w(x) = φ₁,w(u)`.
    fn phi2w_param(&self, w: f64, x: f64) -> f64 {
        let mut u = x;
        for _ in 0..60 {
            let (v, d) = self.phi1w(w, u);
            let step = (2.0 * v - u - x) / (2.0 * d - 1.0);
            u -= step;
            if step.abs() <= 1e-17 {
                break;
            }
        }
        u
    }

    /// `(Ψ_z(t), ∂_t Ψ_z, ∂_w Ψ_z)` on the lift, for the weight `w`.
    fn fiber(&self, w: f64, t: f64) -> (f64, f64, f64) {
        if w == 0.0 {
            return (2.0 * t, 2.0, 0.0);
        }
        let (n, f) = split(t);
        match region(f) {
            Region::U1 => {
                let x = 2.0 * f;
                let (v, d) = self.phi1w(w, x);
                (2.0 * n + v, 2.0 * d, self.arc.eval(x) - x)
            }
            Region::U2 => {
                let x = 2.0 * f - 1.0;
                let u = self.phi2w_param(w, x);
                let (y, d) = self.phi1w(w, u);
                let gap = self.arc.eval(u) - u;
                let u_w = -2.0 * gap / (2.0 * d - 1.0);
                (2.0 * n + 1.0 + y, 2.0 * d / (2.0 * d - 1.0), gap + d * u_w)
            }
            Region::Linear => (2.0 * t, 2.0, 0.0),
        }
    }

    /// The fiber map `Ψ_z` on the lift.
    pub fn psi_z(&self, z: LiftPoint, t: f64) -> f64 {
        self.fiber(self.weight(z).0, t).0
    }

    pub fn psi_z_deriv(&self, z: LiftPoint, t: f64) -> f64 {
        self.fiber(self.weight(z).0, t).1
    }

    /// Φ on the lift R³.
    pub fn eval(&self, p: Point3) -> Point3 {
        let b = self.lin.a_real.apply(p.base());
        Point3::new(b.x, b.y, self.psi_z(p.base(), p.t))
    }

    /// DΦ, row-major; block lower-triangular.
    pub fn deriv(&self, p: Point3) -> [[f64; 3]; 3] {
        let a = self.lin.a_real;
        let (w, grad) = self.weight(p.base());
        let (_, dt, dw) = self.fiber(w, p.t);
        [[a.a, a.b, 0.0], [a.c, a.d, 0.0], [dw * grad.x, dw * grad.y, dt]]
    }

    /// `det DΦ = det B · Ψ_z′(t)`.
    pub fn jacobian(&self, p: Point3) -> f64 {
        self.lin.a_real.det() * self.psi_z_deriv(p.base(), p.t)
    }

    /// The preimages of `t` (mod 1) under `Ψ_z`, in `[0, 1)`.
    pub fn fiber_preimages(&self, z: LiftPoint, t: f64) -> [f64; 2] {
        let w = self.weight(z).0;
        let y = frac(t);
        let inv = |v: f64| {
            if v.abs() < 0.25 {
                0.5 * self.phi1w_inv(w, v)
            } else if (v - 1.0).abs() < 0.25 {
                let y2 = v - 1.0;
                0.5 * (2.0 * y2 - self.phi1w_inv(w, y2) + 1.0)
            } else {
                0.5 * v
            }
        };
        let second = if y >= 0.75 { y - 1.0 } else { y + 1.0 };
        [frac(inv(y)), frac(inv(second))]
    }

    /// All `deg B · 2` preimages of `p` on T³.
    pub fn preimages(&self, p: Point3) -> Vec<Point3> {
        let mut out = Vec::new();
        for i in 0..self.lin.cosets.len() {
            let z = self.lin.a_inv.apply(p.base().shift(self.lin.cosets.rep(i)));
            let zt = project(z);
            for t in self.fiber_preimages(z, p.t) {
                out.push(Point3::new(zt.x, zt.y, t));
            }
        }
        out
    }

    /// `|Σ 1/|Jac| − 1|` over the preimages of `p`.
    pub fn conservativity_defect_at(&self, p: Point3) -> f64 {
        let s: f64 = self.preimages(p).iter().map(|q| 1.0 / self.jacobian(*q).abs()).sum();
        (s - 1.0).abs()
    }

    /// Sup of [`Map3Model::conservativity_defect_at`] over low-discrepancy
    /// points of T³, half of them with the base point inside `B(V₀)`.
    pub fn conservativity_defect(&self, samples: usize) -> f64 {
        let mut worst = 0.0f64;
        let pts = crate::util::r2_points(samples);
        for (i, &(x, y)) in pts.iter().enumerate() {
            let t = frac(0.5 + 0.618_033_988_749_895 * i as f64);
            let base = if i % 2 == 0 {
                LiftPoint::new(x, y)
            } else {
                // Images of points of V₀.
                let q = LiftPoint::new(x - 0.5, y - 0.5) * (2.0 * self.radius);
                self.lin.a_real.apply(q)
            };
            worst = worst.max(self.conservativity_defect_at(Point3::new(base.x, base.y, t)));
        }
        worst
    }

    /// `|1/Ψ_z′(a) + 1/Ψ_z′(b) − 1|` over the fiber over `z`.
    pub fn fiber_residual(&self, z: LiftPoint, samples: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..samples {
            let y = (i as f64 + 0.5) / samples as f64;
            let [a, b] = self.fiber_preimages(z, y);
            let r = 1.0 / self.psi_z_deriv(z, a) + 1.0 / self.psi_z_deriv(z, b) - 1.0;
            worst = worst.max(r.abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Map3Model {
        build_t3_example(IntMatrix2::new(3, 1, 1, 1)).unwrap()
    }

    #[test]
    fn fixed_point_jacobian() {
        let m = model();
        assert_eq!(m.eval(Point3::default()), Point3::default());
        assert!((m.jacobian(Point3::default()) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn central_fiber_is_psi() {
        let m = model();
        for i in 0..200 {
            let t = i as f64 / 200.0;
            assert!((m.psi_z(LiftPoint::ORIGIN, t) - m.circle.psi(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_the_disc_is_linear() {
        let m = model();
        let p = Point3::new(0.5, 0.4, 0.3);
        let q = m.eval(p);
        assert!((q.x - 1.9).abs() < 1e-15 && (q.y - 0.9).abs() < 1e-15 && q.t == 0.6);
    }

    #[test]
    fn derivative_matches_differences() {
        let m = model();
        let h = 1e-6;
        for &(x, y, t) in &[(0.05, 0.08, 0.51), (0.1, -0.07, 0.03), (-0.12, 0.02, 0.46)] {
            let p = Point3::new(x, y, t);
            let d = m.deriv(p);
            let dx = (m.eval(Point3::new(x + h, y, t)).t - m.eval(Point3::new(x - h, y, t)).t) / (2.0 * h);
            let dy = (m.eval(Point3::new(x, y + h, t)).t - m.eval(Point3::new(x, y - h, t)).t) / (2.0 * h);
            let dt = (m.eval(Point3::new(x, y, t + h)).t - m.eval(Point3::new(x, y, t - h)).t) / (2.0 * h);
            assert!((d[2][0] - dx).abs() < 1e-6 && (d[2][1] - dy).abs() < 1e-6 && (d[2][2] - dt).abs() < 1e-6);
        }
    }

    #[test]
    fn fibers_are_conservative() {
        let m = model();
        for &(x, y) in &[(0.0, 0.0), (0.05, 0.03), (0.12, -0.1), (0.0, 0.19)] {
            assert!(m.fiber_residual(LiftPoint::new(x, y), 2000) < 1e-12);
        }
    }
}
