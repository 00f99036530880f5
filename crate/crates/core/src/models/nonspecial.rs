//! g₁: g₀ post-composed with a localized shear along e_s.
//!
//! `S(y) = y + ε ψ(y − c) e_s`, with ψ a product bump in the eigen-frame
//! of half-widths `stretch·ρ` along e_s and `ρ` along e_u. The region sits
//! strictly between the two saddles of g₀, inside the basin of the sink, so
//! it misses the injectivity set of the semi-conjugacy.

use alloc::format;
use alloc::string::String;

use super::mane::ManeSc;
use super::{lift_inverse, BranchProbe, Endomorphism, Linearization, ModelError, SampleBox};
use crate::bump::BumpProfile;
use crate::hyperbolicity::{check_cone_invariance, cone_defect_of, ConeParams};
use crate::linalg::Mat2;
use crate::linear::Sigma;
use crate::torus::{project, LiftPoint, TorusPoint};

/// Along-e_s half-width of the region relative to `radius`.
pub const DEFAULT_STRETCH: f64 = 16.0;

/// Tilt of the shear used for g₁.
pub const DEFAULT_TILT: f64 = 0.35;

/// Region radius relative to the saddle height of g₀.
const RADIUS_FRACTION: f64 = 0.8;

/// Grid used for the global part of the cone re-check.
const CONE_GRID: usize = 200;

/// Samples per axis of the region in the local cone re-check.
const REGION_SAMPLES: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShearRegion {
    pub center: TorusPoint,
    /// Half-width along e_u.
    pub radius: f64,
    /// Ratio of the e_s half-width to `radius`.
    pub stretch: f64,
    /// Shear strength ε.
    pub shear: f64,
}

fn profile() -> BumpProfile {
    BumpProfile::new(0.3, 1.0)
}

impl ShearRegion {
    /// The region used for g₁: centered so that the shifted sink `p` of
    /// `S∘g₀` satisfies `Δˢ(p) = ε` exactly, with `ε` chosen so that
    /// `sup ε|∂ψ/∂ξ_u| = tilt`.
    pub fn at_sink(base: &ManeSc, tilt: f64) -> ShearRegion {
        let spec = &base.linear().spectrum;
        let radius = RADIUS_FRACTION * base.saddle_height();
        let shear = tilt * radius / profile().peak_slope();
        let mu = spec.mu_s;
        let c = spec.from_eigen_coords(mu * shear / (1.0 - mu), 0.0);
        ShearRegion { center: project(c), radius, stretch: DEFAULT_STRETCH, shear }
    }

    pub fn with_shear(self, shear: f64) -> ShearRegion {
        ShearRegion { shear, ..self }
    }

    /// `sup |ε ∂ψ/∂ξ_u|`.
    pub fn tilt(&self) -> f64 {
        (self.shear * profile().peak_slope() / self.radius).abs()
    }
}


#[derive(Clone, Debug)]
pub struct NonSpecial {
    base: ManeSc,
    region: ShearRegion,
    center: LiftPoint,
    bump: BumpProfile,
    e_s: LiftPoint,
    cone: ConeParams,
    cone_defect: f64,
    label: String,
}

/// Builds `S∘g₀`, checking that the region lies in the sink basin of g₀
/// and that the g₀ cone field is still invariant.
pub fn build_nonspecial(base: ManeSc, region: ShearRegion) -> Result<NonSpecial, ModelError> {
    if !(region.radius > 0.0 && region.stretch >= 1.0 && region.shear.is_finite()) {
        return Err(ModelError::InvalidParameter("shear region needs radius > 0, stretch >= 1"));
    }
    let spec = base.linear().spectrum;
    let cone = ConeParams::for_mane(&spec, base.certificate())
        .map_err(|_| ModelError::InvalidParameter("base certificate gives no cone"))?;
    let mut m = NonSpecial {
        center: region.center.lift().reduced(),
        e_s: spec.unit(Sigma::Stable),
        bump: profile(),
        label: format!("nonspecial(shear={:e})", region.shear),
        cone,
        cone_defect: 0.0,
        region,
        base,
    };
    let half_s = region.radius * region.stretch;
    for y in m.region_samples(half_s, region.radius) {
        if !m.base.in_sink_basin(project(y), 0) {
            return Err(ModelError::RegionIntersectsLambda);
        }
    }
    if region.shear != 0.0 {
        let defect = m.local_cone_defect()?.max(check_cone_invariance(&m, &cone, CONE_GRID));
        if defect > 0.0 {
            return Err(ModelError::ConeBroken { defect });
        }
        m.cone_defect = defect;
    }
    Ok(m)
}

impl NonSpecial {
    pub fn base(&self) -> &ManeSc {
        &self.base
    }

    pub fn region(&self) -> &ShearRegion {
        &self.region
    }

    /// Largest cone inclusion defect found while building.
    pub fn cone_defect(&self) -> f64 {
        self.cone_defect
    }

    /// The cone field the model was validated against.
    pub fn cone(&self) -> &ConeParams {
        &self.cone
    }

    fn region_samples(&self, half_s: f64, half_u: f64) -> impl Iterator<Item = LiftPoint> + '_ {
        let n = REGION_SAMPLES;
        let spec = self.base.linear().spectrum;
        (0..n * n).map(move |i| {
            let s = half_s * (2.0 * (i / n) as f64 / (n - 1) as f64 - 1.0);
            let u = half_u * (2.0 * (i % n) as f64 / (n - 1) as f64 - 1.0);
            self.center + spec.from_eigen_coords(s, u)
        })
    }

    /// Cone defect at every preimage of the region samples.
    fn local_cone_defect(&self) -> Result<f64, ModelError> {
        let lin = self.base.linear();
        let r = &self.region;
        let mut worst = 0.0f64;
        for y in self.region_samples(r.radius * r.stretch, r.radius) {
            for c in 0..lin.cosets.len() {
                let x = lift_inverse(&self.base, y.shift(lin.cosets.rep(c)))?;
                worst = worst.max(cone_defect_of(&self.cone, self.deriv(x)));
            }
        }
        Ok(worst)
    }

    /// `(ψ, ∂ψ/∂ξ_s, ∂ψ/∂ξ_u)` at `y`.
    fn psi(&self, y: LiftPoint) -> (f64, f64, f64) {
        let q = y - y.round().as_point() - self.center;
        let (s, u) = self.base.linear().spectrum.eigen_coords(q);
        let ws = self.region.radius * self.region.stretch;
        let wu = self.region.radius;
        if s.abs() >= ws || u.abs() >= wu {
            return (0.0, 0.0, 0.0);
        }
        let (a, da) = self.bump.eval_with_deriv(s / ws);
        let (b, db) = self.bump.eval_with_deriv(u / wu);
        (a * b, da * b / ws, a * db / wu)
    }

    /// The shear S.
    pub fn shear_map(&self, y: LiftPoint) -> LiftPoint {
        y + self.e_s * (self.region.shear * self.psi(y).0)
    }

    fn shear_deriv(&self, y: LiftPoint) -> Mat2 {
        let (_, ps, pu) = self.psi(y);
        if ps == 0.0 && pu == 0.0 {
            return Mat2::IDENTITY;
        }
        let eps = self.region.shear;
        let g = self.base.linear().spectrum.basis_inv.transpose().apply(LiftPoint::new(eps * ps, eps * pu));
        let e = self.e_s;
        Mat2::new(1.0 + e.x * g.x, e.x * g.y, e.y * g.x, 1.0 + e.y * g.y)
    }

    /// The sink of g₁ near 0, found by forward iteration.
    pub fn shifted_sink(&self) -> LiftPoint {
        let mut p = LiftPoint::ORIGIN;
        for _ in 0..2000 {
            let q = self.lift(p);
            if (q - p).norm() < 1e-16 {
                return q;
            }
            p = q;
        }
        p
    }

    /// The designed probe: `x = g₁(q)`, `q = S(y)`, where `ε ∂ψ/∂ξ_u`
    /// peaks at `y`. The preimage `q` is the image of a point sheared at
    /// full tilt; the other preimages are not.
    pub fn probe(&self) -> Result<BranchProbe, ModelError> {
        let lin = self.base.linear();
        let spec = lin.spectrum;
        let peak = 0.5 * (self.bump.plateau + self.bump.support);
        let y = self.center + spec.from_eigen_coords(0.0, peak * self.region.radius);
        BranchProbe::through(self, self.shear_map(y))
    }
}

impl Endomorphism for NonSpecial {
    fn linear(&self) -> &Linearization {
        self.base.linear()
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn lift(&self, p: LiftPoint) -> LiftPoint {
        self.shear_map(self.base.lift(p))
    }

    fn deriv(&self, p: LiftPoint) -> Mat2 {
        self.shear_deriv(self.base.lift(p)) * self.base.deriv(p)
    }

    fn displacement_bound(&self) -> f64 {
        self.base.displacement_bound() + self.region.shear.abs()
    }

    fn displacement_eigen(&self, p: LiftPoint) -> (f64, f64) {
        let (s, u) = self.base.displacement_eigen(p);
        (s + self.region.shear * self.psi(self.base.lift(p)).0, u)
    }

    /// The base supports and the preimages of the shear region.
    fn perturbation_boxes(&self) -> alloc::vec::Vec<SampleBox> {
        let mut out = self.base.perturbation_boxes();
        let spec = &self.base.linear().spectrum;
        let r = &self.region;
        let a_inv = self.base.linear().a_inv;
        let half_s = spec.unit(Sigma::Stable) * (r.radius * r.stretch);
        let half_u = spec.unit(Sigma::Unstable) * r.radius;
        let lin = self.base.linear();
        for c in 0..lin.cosets.len() {
            // The region lies in the linear part of g₀'s e_s-direction, so
            // its preimages are close to A⁻¹-images.
            let y = self.center.shift(lin.cosets.rep(c));
            let center = lift_inverse(&self.base, y).unwrap_or_else(|_| a_inv.apply(y));
            out.push(SampleBox { center, half_s: a_inv.apply(half_s), half_u: a_inv.apply(half_u) * 4.0 });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolicity::branch_pair_spread;
    use crate::linear::IntMatrix2;
    use crate::models::mane::tests::g0_params;
    use crate::models::{build_mane_sc, jacobian_defect_at};

    fn base() -> ManeSc {
        build_mane_sc(IntMatrix2::new(3, 1, 1, 1), g0_params(215.0)).unwrap()
    }

    #[test]
    fn zero_shear_is_the_base() {
        let b = base();
        let r = ShearRegion::at_sink(&b, DEFAULT_TILT).with_shear(0.0);
        let m = build_nonspecial(b.clone(), r).unwrap();
        for &(x, y) in &[(0.0, 0.0), (1e-4, 2e-4), (0.3, 0.6)] {
            let p = LiftPoint::new(x, y);
            assert_eq!(m.lift(p), b.lift(p));
        }
    }

    #[test]
    fn designed_sink() {
        let b = base();
        let r = ShearRegion::at_sink(&b, DEFAULT_TILT);
        let m = build_nonspecial(b, r).unwrap();
        let spec = m.linear().spectrum;
        let p = m.shifted_sink();
        let (s, u) = spec.eigen_coords(p);
        assert!((s - r.shear / (1.0 - spec.mu_s)).abs() < 1e-15 && u.abs() < 1e-15);
        assert!((m.displacement_eigen(p).0 - r.shear).abs() < 1e-15);
        assert!(jacobian_defect_at(&m, p + spec.from_eigen_coords(0.0, 0.6 * r.radius), 1e-8) < 1e-5);
    }

    #[test]
    fn probe_branches_split() {
        let b = base();
        let m = build_nonspecial(b.clone(), ShearRegion::at_sink(&b, DEFAULT_TILT)).unwrap();
        let pr = m.probe().unwrap();
        let d = branch_pair_spread(&m, pr.x.lift(), &pr.through, &pr.avoiding).unwrap();
        assert!(d > 1e-3, "{d}");
    }

    #[test]
    fn far_region_is_rejected() {
        let b = base();
        let r = ShearRegion { center: TorusPoint::new(0.4, 0.3), ..ShearRegion::at_sink(&b, DEFAULT_TILT) };
        assert_eq!(build_nonspecial(b, r).unwrap_err(), ModelError::RegionIntersectsLambda);
    }

    #[test]
    fn strong_shear_breaks_cones() {
        let b = base();
        let r = ShearRegion::at_sink(&b, 1.5);
        assert!(matches!(build_nonspecial(b, r).unwrap_err(), ModelError::ConeBroken { .. }));
    }
}
