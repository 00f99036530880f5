//! A cu-type counterpart of g₀: the perturbation acts along e_s and pushes
//! the stable eigenvalue at 0 above 1, while the unstable cone survives.
//! It exists to exercise the cu side of the classification and special tests.

use alloc::string::String;

use super::mane::{support_fits, Inequality};
use super::{BranchProbe, Endomorphism, Linearization, ModelError, SampleBox};
use crate::bump::BumpProfile;
use crate::linalg::Mat2;
use crate::linear::{IntMatrix2, Sigma};
use crate::torus::LiftPoint;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CuParams {
    pub mu1: f64,
    pub mu2: f64,
    /// Positive push on the e_s derivative at 0, so that it equals `μ1 + λ`.
    pub lambda: f64,
    pub k: f64,
    pub support_scale: f64,
}

impl CuParams {
    /// Parameters giving the e_s derivative `center` at the fixed point.
    pub fn with_center_derivative(mu1: f64, mu2: f64, center: f64) -> Self {
        CuParams { mu1, mu2, lambda: center - mu1, k: 2.0, support_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CuCertificate {
    pub params: CuParams,
    /// e_s derivative at the fixed point.
    pub fixed_point_center: f64,
    pub min_center: f64,
    pub max_center: f64,
    /// Largest sampled `|∂Δˢ/∂ξ_u|`.
    pub max_coupling: f64,
    /// Aperture of the unstable cone `|v_s| ≤ β |v_u|`.
    pub unstable_aperture: f64,
    /// Largest sampled aperture of the image cone.
    pub image_aperture: f64,
}

/// Aperture of the certified unstable cone.
const UNSTABLE_APERTURE: f64 = 0.5;

/// Profile of the e_s factor; its small plateau keeps `φ + tφ′` above −1.1.
fn center_bump() -> BumpProfile {
    BumpProfile::new(0.02, 0.5)
}

pub fn validate_cu_params(p: &CuParams) -> Result<CuCertificate, ModelError> {
    let ok = p.mu1 > 0.0
        && p.mu1 < 1.0
        && p.mu2 > 1.0
        && p.lambda > 0.0
        && p.mu1 + p.lambda >= 1.0
        && p.k >= 1.0
        && p.k.is_finite()
        && p.support_scale > 0.0
        && p.support_scale <= 1.0;
    if !ok {
        return Err(ModelError::ConeFailure { which: Inequality::ParameterRange });
    }
    let cb = center_bump();
    let ub = BumpProfile::standard();
    let n = 801;
    let mut min_c = f64::INFINITY;
    let mut max_c = f64::NEG_INFINITY;
    let mut max_b = 0.0f64;
    for i in 0..n {
        let t = 0.5 * i as f64 / (n - 1) as f64;
        let (pc, dpc) = cb.eval_with_deriv(t);
        let h = pc + t * dpc;
        for j in 0..n {
            let s = 0.25 * j as f64 / (n - 1) as f64;
            let (pu, dpu) = ub.eval_with_deriv(s);
            let c = p.mu1 + p.lambda * pu * h;
            min_c = min_c.min(c);
            max_c = max_c.max(c);
            max_b = max_b.max((p.lambda * pc * t * dpu / p.k).abs());
        }
    }
    if !(min_c > 0.0) {
        return Err(ModelError::ConeFailure { which: Inequality::LocalDiffeo });
    }
    if !(max_c < p.mu2) {
        return Err(ModelError::ConeFailure { which: Inequality::CenterGap });
    }
    let beta = UNSTABLE_APERTURE;
    let image = (max_c * beta + max_b) / p.mu2;
    if !(image < 0.9 * beta) {
        return Err(ModelError::ConeFailure { which: Inequality::UnstableCone });
    }
    Ok(CuCertificate {
        params: *p,
        fixed_point_center: p.mu1 + p.lambda,
        min_center: min_c,
        max_center: max_c,
        max_coupling: max_b,
        unstable_aperture: beta,
        image_aperture: image,
    })
}

#[derive(Clone, Debug)]
pub struct ManeCu {
    lin: Linearization,
    params: CuParams,
    cert: CuCertificate,
    center: BumpProfile,
    unstable: BumpProfile,
    half_s: f64,
    half_u: f64,
    e_s: LiftPoint,
    label: String,
}

pub fn build_mane_cu(a: IntMatrix2, p: CuParams) -> Result<ManeCu, ModelError> {
    let lin = Linearization::new(a)?;
    let cert = validate_cu_params(&p)?;
    let half_s = p.support_scale * 0.5 / p.k;
    let half_u = p.support_scale * 0.25;
    if !support_fits(&lin.spectrum, half_s, half_u) {
        return Err(ModelError::SupportOverlap);
    }
    let e_s = lin.spectrum.unit(Sigma::Stable);
    Ok(ManeCu {
        lin,
        params: p,
        cert,
        center: center_bump(),
        unstable: BumpProfile::standard(),
        half_s,
        half_u,
        e_s,
        label: String::from("mane_cu"),
    })
}

impl ManeCu {
    pub fn params(&self) -> &CuParams {
        &self.params
    }

    pub fn certificate(&self) -> &CuCertificate {
        &self.cert
    }

    fn local(&self, p: LiftPoint) -> (f64, f64) {
        self.lin.spectrum.eigen_coords(p - p.round().as_point())
    }

    /// `(d, ∂d/∂ξ_s, ∂d/∂ξ_u)` for the e_s displacement `d`, or `None`
    /// outside the support.
    fn term(&self, p: LiftPoint) -> Option<(f64, f64, f64)> {
        let (s, u) = self.local(p);
        if s.abs() >= self.half_s || u.abs() >= self.half_u {
            return None;
        }
        let r = self.params.support_scale;
        let k = self.params.k;
        let t = k * s / r;
        let (pc, dpc) = self.center.eval_with_deriv(t);
        let (pu, dpu) = self.unstable.eval_with_deriv(u / r);
        let lam = self.params.lambda;
        Some((lam * pc * pu * s, lam * pu * (pc + t * dpc), lam * pc * t * dpu / k))
    }

    /// The probe through the support point of largest coupling `|b|` (on a
    /// 201 × 201 grid), where E² picks up the tilt `≈ b/μ_u` along one
    /// branch and stays on e_u along the other.
    pub fn probe(&self) -> Result<BranchProbe, ModelError> {
        let spec = &self.lin.spectrum;
        let n = 201;
        let mut best = (0.0f64, LiftPoint::ORIGIN);
        for i in 0..n {
            let s = self.half_s * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
            for j in 0..n {
                let u = self.half_u * (2.0 * j as f64 / (n - 1) as f64 - 1.0);
                let p = spec.from_eigen_coords(s, u);
                if let Some((_, _, b)) = self.term(p) {
                    if b.abs() > best.0 {
                        best = (b.abs(), p);
                    }
                }
            }
        }
        BranchProbe::through(self, best.1)
    }

    /// The upper-triangular eigen-frame Jacobian `[[c, b], [0, μ_u]]` as `(c, b)`.
    pub fn eigen_jacobian(&self, p: LiftPoint) -> (f64, f64) {
        match self.term(p) {
            Some((_, ds, du)) => (self.lin.spectrum.mu_s + ds, du),
            None => (self.lin.spectrum.mu_s, 0.0),
        }
    }
}

impl Endomorphism for ManeCu {
    fn linear(&self) -> &Linearization {
        &self.lin
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn lift(&self, p: LiftPoint) -> LiftPoint {
        let ap = self.lin.a_real.apply(p);
        match self.term(p) {
            Some((d, _, _)) => ap + self.e_s * d,
            None => ap,
        }
    }

    fn deriv(&self, p: LiftPoint) -> Mat2 {
        let a = self.lin.a_real;
        let Some((_, ds, du)) = self.term(p) else { return a };
        let g = self.lin.spectrum.basis_inv.transpose().apply(LiftPoint::new(ds, du));
        let e = self.e_s;
        Mat2::new(a.a + e.x * g.x, a.b + e.x * g.y, a.c + e.y * g.x, a.d + e.y * g.y)
    }

    fn displacement_bound(&self) -> f64 {
        self.params.lambda * self.half_s
    }

    fn displacement(&self, p: LiftPoint) -> LiftPoint {
        match self.term(p) {
            Some((d, _, _)) => self.e_s * d,
            None => LiftPoint::ORIGIN,
        }
    }

    fn displacement_eigen(&self, p: LiftPoint) -> (f64, f64) {
        (self.term(p).map_or(0.0, |t| t.0), 0.0)
    }

    fn perturbation_boxes(&self) -> alloc::vec::Vec<SampleBox> {
        alloc::vec![SampleBox {
            center: LiftPoint::ORIGIN,
            half_s: self.e_s * self.half_s,
            half_u: self.lin.spectrum.unit(Sigma::Unstable) * self.half_u,
        }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::jacobian_defect;

    fn model() -> ManeCu {
        let r2 = core::f64::consts::SQRT_2;
        build_mane_cu(IntMatrix2::new(3, 1, 1, 1), CuParams::with_center_derivative(2.0 - r2, 2.0 + r2, 1.05)).unwrap()
    }

    #[test]
    fn neutral_fixed_point() {
        let m = model();
        assert_eq!(m.lift(LiftPoint::ORIGIN), LiftPoint::ORIGIN);
        let (c, b) = m.eigen_jacobian(LiftPoint::ORIGIN);
        assert!((c - 1.05).abs() < 1e-14 && b == 0.0);
        assert!(m.cert.min_center > 0.0);
        assert!(jacobian_defect(&m, 30, 1e-6) < 1e-6);
    }

    #[test]
    fn linear_outside_support() {
        let m = model();
        let p = m.lin.spectrum.from_eigen_coords(0.0, 0.3);
        assert_eq!(m.displacement(p), LiftPoint::ORIGIN);
    }

    #[test]
    fn probe_branches_split() {
        let m = model();
        let pr = m.probe().unwrap();
        let d = crate::hyperbolicity::branch_pair_spread(&m, pr.x.lift(), &pr.through, &pr.avoiding).unwrap();
        assert!(d > 1e-3, "{d}");
    }

    #[test]
    fn rejects_a_stable_fixed_point() {
        let r2 = core::f64::consts::SQRT_2;
        let p = CuParams::with_center_derivative(2.0 - r2, 2.0 + r2, 0.9);
        assert!(validate_cu_params(&p).is_err());
    }
}
