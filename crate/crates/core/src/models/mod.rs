//! Concrete endomorphism models behind the [`Endomorphism`] interface.
//!
//! Every model is a lift `F = A + Δ` of a torus map with Z²-periodic
//! displacement `Δ`, so `F(p + n) = F(p) + A n`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::hyperbolicity::BackwardBranch;
use crate::linalg::Mat2;
use crate::linear::{classify, CosetReps, IntMatrix2, LinearError, SpectralData};
use crate::torus::{project, torus_dist, DeckVector, LiftPoint, TorusPoint};

mod circle;
mod cu;
pub(crate) mod mane;
mod nonspecial;
mod t3;

pub use circle::{build_circle_pair, CirclePair, PHI1_SLOPE_AT_ZERO};
pub use cu::{build_mane_cu, validate_cu_params, CuCertificate, CuParams, ManeCu};
pub use mane::{support_fits, build_mane_sc, choose_k, validate_mane_params, ConeCertificate, Inequality, ManeParams, ManeSc};
pub use nonspecial::{build_nonspecial, NonSpecial, ShearRegion, DEFAULT_STRETCH, DEFAULT_TILT};
pub use t3::{build_t3_example, Map3Model, Point3};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error("Newton inversion of the lift did not converge at ({x}, {y})")]
    NewtonDivergence { x: f64, y: f64 },
    #[error("cone certificate failed: {which}")]
    ConeFailure { which: Inequality },
    #[error("lattice translates of the perturbation support overlap")]
    SupportOverlap,
    #[error("shear region meets the estimated injectivity set of the base map")]
    RegionIntersectsLambda,
    #[error("shear breaks the cone certificate (defect {defect:.3e})")]
    ConeBroken { defect: f64 },
    #[error("circle profile integration failed at y = {y}")]
    IntegrationFailure { y: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// The linear part shared by every model: spectrum, the inverse of A and
/// coset representatives of Z²/AZ².
#[derive(Clone, Debug)]
pub struct Linearization {
    pub spectrum: SpectralData,
    pub cosets: CosetReps,
    pub a_real: Mat2,
    pub a_inv: Mat2,
}

impl Linearization {
    pub fn new(a: IntMatrix2) -> Result<Self, LinearError> {
        let spectrum = classify(a)?;
        let a_real = a.to_real();
        Ok(Linearization {
            spectrum,
            cosets: CosetReps::new(&a)?,
            a_real,
            a_inv: a_real.inverse().ok_or(LinearError::Singular)?,
        })
    }

    pub fn matrix(&self) -> IntMatrix2 {
        self.spectrum.matrix
    }

    pub fn degree(&self) -> usize {
        self.spectrum.degree as usize
    }
}

/// The parallelogram `center + a·half_s + b·half_u`, `|a|, |b| ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleBox {
    pub center: LiftPoint,
    pub half_s: LiftPoint,
    pub half_u: LiftPoint,
}

impl SampleBox {
    /// `n × n` cell-centered points.
    pub fn grid(&self, n: usize) -> Vec<LiftPoint> {
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            let a = 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
            for j in 0..n {
                let b = 2.0 * (j as f64 + 0.5) / n as f64 - 1.0;
                out.push(self.center + self.half_s * a + self.half_u * b);
            }
        }
        out
    }
}

/// A point `x = F(q)` with two first backward steps: `through` lands on
/// `q`, `avoiding` on another preimage. Non-specialness oracles compare E²
/// along the two.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchProbe {
    pub x: TorusPoint,
    pub through: BackwardBranch,
    pub avoiding: BackwardBranch,
}

impl BranchProbe {
    pub fn through<M: Endomorphism + ?Sized>(m: &M, q: LiftPoint) -> Result<Self, ModelError> {
        let lin = m.linear();
        let x = m.lift(q);
        let target = project(q);
        let mut through = None;
        let mut avoiding = None;
        for c in 0..lin.cosets.len() {
            let p = project(lift_inverse(m, x.shift(lin.cosets.rep(c)))?);
            if torus_dist(p, target) < 1e-9 {
                through.get_or_insert(c);
            } else {
                avoiding.get_or_insert(c);
            }
        }
        match (through, avoiding) {
            (Some(a), Some(b)) => Ok(BranchProbe {
                x: project(x),
                through: BackwardBranch::new(alloc::vec![a]),
                avoiding: BackwardBranch::new(alloc::vec![b]),
            }),
            _ => Err(ModelError::InvalidParameter("probe point has a single preimage")),
        }
    }
}

/// A lift `F: R² → R²` of a torus endomorphism homotopic to `A`.
pub trait Endomorphism: Sync {
    fn linear(&self) -> &Linearization;

    fn label(&self) -> &str;

    fn lift(&self, p: LiftPoint) -> LiftPoint;

    /// Jacobian of [`Endomorphism::lift`].
    fn deriv(&self, p: LiftPoint) -> Mat2;

    /// An upper bound for `sup|F − A|`.
    fn displacement_bound(&self) -> f64;

    /// `Δ(p) = F(p) − A p`.
    fn displacement(&self, p: LiftPoint) -> LiftPoint {
        self.lift(p) - self.linear().a_real.apply(p)
    }

    /// `Δ(p)` in the (e_s, e_u) frame of A.
    fn displacement_eigen(&self, p: LiftPoint) -> (f64, f64) {
        self.linear().spectrum.eigen_coords(self.displacement(p))
    }

    /// `false` when `Δ` is known to be parallel to e_u everywhere.
    fn has_stable_displacement(&self) -> bool {
        true
    }

    /// Regions (mod Z²) outside which `F = A`; searches sample them densely.
    fn perturbation_boxes(&self) -> Vec<SampleBox> {
        Vec::new()
    }

    fn linearization(&self) -> IntMatrix2 {
        self.linear().matrix()
    }

    /// The induced map on T².
    fn torus_map(&self, x: TorusPoint) -> TorusPoint {
        project(self.lift(x.lift()))
    }
}

/// The linear endomorphism itself, `F = A`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    lin: Linearization,
    label: String,
}

impl LinearModel {
    pub fn new(a: IntMatrix2) -> Result<Self, ModelError> {
        Ok(LinearModel { lin: Linearization::new(a)?, label: String::from("linear") })
    }
}

impl Endomorphism for LinearModel {
    fn linear(&self) -> &Linearization {
        &self.lin
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn lift(&self, p: LiftPoint) -> LiftPoint {
        self.lin.a_real.apply(p)
    }
    fn deriv(&self, _p: LiftPoint) -> Mat2 {
        self.lin.a_real
    }
    fn displacement_bound(&self) -> f64 {
        0.0
    }
    fn displacement(&self, _p: LiftPoint) -> LiftPoint {
        LiftPoint::ORIGIN
    }
    fn has_stable_displacement(&self) -> bool {
        false
    }
}

const NEWTON_MAX_STEPS: usize = 50;

/// `F⁻¹(y)` by damped Newton iteration seeded at `A⁻¹ y`.
pub fn lift_inverse<M: Endomorphism + ?Sized>(m: &M, y: LiftPoint) -> Result<LiftPoint, ModelError> {
    let scale = 1.0 + y.max_abs();
    let mut p = m.linear().a_inv.apply(y);
    let mut r = m.lift(p) - y;
    let mut rn = r.max_abs();
    for _ in 0..NEWTON_MAX_STEPS {
        if rn <= 1e-15 * scale {
            break;
        }
        let Some(step) = m.deriv(p).solve(r) else { break };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let q = p - step * t;
            let rq = m.lift(q) - y;
            let rqn = rq.max_abs();
            if rqn < rn || rqn <= 1e-15 * scale {
                p = q;
                r = rq;
                rn = rqn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn <= 1e-11 * scale {
        Ok(p)
    } else {
        Err(ModelError::NewtonDivergence { x: y.x, y: y.y })
    }
}

/// The `degree` preimages of `x` under the torus map, in coset order.
pub fn torus_preimages<M: Endomorphism + ?Sized>(m: &M, x: TorusPoint) -> Result<Vec<TorusPoint>, ModelError> {
    let lin = m.linear();
    (0..lin.cosets.len())
        .map(|i| lift_inverse(m, x.lift().shift(lin.cosets.rep(i))).map(project))
        .collect()
}

/// `|Σ_{f(y)=x} 1/|det Df(y)| − 1|` at one point.
pub fn conservativity_defect_at<M: Endomorphism + ?Sized>(m: &M, x: TorusPoint) -> Result<f64, ModelError> {
    let mut s = 0.0;
    for y in torus_preimages(m, x)? {
        s += 1.0 / m.deriv(y.lift()).det().abs();
    }
    Ok((s - 1.0).abs())
}

/// Sup of [`conservativity_defect_at`] over the origin and `samples`
/// low-discrepancy points.
pub fn conservativity_defect<M: Endomorphism + ?Sized>(m: &M, samples: usize) -> Result<f64, ModelError> {
    let mut worst = conservativity_defect_at(m, TorusPoint::default())?;
    for (x, y) in crate::util::r2_points(samples) {
        worst = worst.max(conservativity_defect_at(m, TorusPoint::new(x, y))?);
    }
    Ok(worst)
}

/// Sup over a grid of `|F(p + e_i) − F(p) − A e_i|`.
pub fn homotopy_defect<M: Endomorphism + ?Sized>(m: &M, grid_n: usize) -> f64 {
    let a = m.linearization();
    let mut worst = 0.0f64;
    for x in crate::util::unit_grid(grid_n) {
        for y in crate::util::unit_grid(grid_n) {
            let p = LiftPoint::new(x, y);
            let f = m.lift(p);
            for e in [DeckVector::E1, DeckVector::E2] {
                let d = m.lift(p.shift(e)) - f - a.apply(e).as_point();
                worst = worst.max(d.norm());
            }
        }
    }
    worst
}

/// Largest entry of `DF − (central difference quotient)` over a grid.
pub fn jacobian_defect<M: Endomorphism + ?Sized>(m: &M, grid_n: usize, h: f64) -> f64 {
    let mut worst = 0.0f64;
    for x in crate::util::unit_grid(grid_n) {
        for y in crate::util::unit_grid(grid_n) {
            let p = LiftPoint::new(x, y);
            worst = worst.max(jacobian_defect_at(m, p, h));
        }
    }
    worst
}

pub fn jacobian_defect_at<M: Endomorphism + ?Sized>(m: &M, p: LiftPoint, h: f64) -> f64 {
    let dx = (m.lift(p + LiftPoint::new(h, 0.0)) - m.lift(p - LiftPoint::new(h, 0.0))) * (0.5 / h);
    let dy = (m.lift(p + LiftPoint::new(0.0, h)) - m.lift(p - LiftPoint::new(0.0, h))) * (0.5 / h);
    let j = m.deriv(p);
    (j.a - dx.x)
        .abs()
        .max((j.c - dx.y).abs())
        .max((j.b - dy.x).abs())
        .max((j.d - dy.y).abs())
}

/// Points of a preimage list that coincide with `x` up to `tol`.
pub fn contains_point(points: &[TorusPoint], x: TorusPoint, tol: f64) -> bool {
    points.iter().any(|p| torus_dist(*p, x) <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_inverse_is_exact() {
        let m = LinearModel::new(IntMatrix2::new(3, 1, 1, 1)).unwrap();
        let y = LiftPoint::new(0.7, -1.3);
        let p = lift_inverse(&m, y).unwrap();
        assert_eq!(p, m.linear().a_inv.apply(y));
        let pre = torus_preimages(&m, TorusPoint::default()).unwrap();
        assert!(contains_point(&pre, TorusPoint::new(0.0, 0.0), 1e-15));
        assert!(contains_point(&pre, TorusPoint::new(0.5, 0.5), 1e-15));
        assert_eq!(conservativity_defect(&m, 100).unwrap(), 0.0);
    }
}
