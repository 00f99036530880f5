//! The sc-DA map g₀: a linear Anosov endomorphism whose center direction is
//! pushed through zero near the fixed point, creating a sink and two saddles
//! on the unstable line through 0.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{SampleBox, Endomorphism, Linearization, ModelError};
use crate::bump::BumpProfile;
use crate::linalg::Mat2;
use crate::linear::{IntMatrix2, Sigma, SpectralData};
use crate::torus::{LiftPoint, TorusPoint};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ManeParams {
    pub mu1: f64,
    pub mu2: f64,
    pub lambda: f64,
    pub k: f64,
    pub support_scale: f64,
}

/// The conditions checked by [`validate_mane_params`], in checking order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Inequality {
    /// `0 < μ1 < 1 < μ2`, `k ≥ 1`, `0 < r ≤ 1`.
    ParameterRange,
    /// `μ1 − μ2 < λ < 1 − μ2`, so that 0 is a sink of the center direction.
    SinkRange,
    /// (i) `μ2 + λ − μ1 > 0`.
    CenterGap,
    /// (ii) `B − C a < −μ1 a` on the sampled derivative box.
    ConeInclusion,
    /// (iii) `(C²−1)b² + 2BCb + B² + μ1² − 1 < 0` for `|b| ≤ a`.
    VectorContraction,
    /// Inclusions of a user-supplied cone pair.
    ConeInvariance,
    /// The cu-model's local-diffeomorphism condition `∂Δˢ/∂ξ_s > −μ1`.
    LocalDiffeo,
    /// The cu-model's unstable cone estimate.
    UnstableCone,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Inequality::ParameterRange => "parameter range",
            Inequality::SinkRange => "sink range mu1-mu2 < lambda < 1-mu2",
            Inequality::CenterGap => "(i) mu2+lambda-mu1 > 0",
            Inequality::ConeInclusion => "(ii) B - C a < -mu1 a",
            Inequality::VectorContraction => "(iii) (C^2-1)b^2 + 2BCb + B^2 + mu1^2 - 1 < 0",
            Inequality::ConeInvariance => "cone invariance",
            Inequality::LocalDiffeo => "local diffeomorphism",
            Inequality::UnstableCone => "unstable cone",
        };
        f.write_str(s)
    }
}

/// Outcome of a successful validation.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConeCertificate {
    pub params: ManeParams,
    /// Sampled maximum of `B/(C − μ1)`.
    pub c0: f64,
    /// Cone aperture `a = 2 C₀(k)`.
    pub aperture: f64,
    /// `μ2 + λ`, the center derivative at the sink.
    pub sink_derivative: f64,
    /// Largest sampled value of `B − C a + μ1 a` (negative when (ii) holds).
    pub inclusion_margin: f64,
    /// Largest sampled value of the quadratic in (iii).
    pub contraction_margin: f64,
    /// `t*` with `φ(t*) = (1 − μ2)/λ`; the saddles sit at `ξ_u = ±r t*/k`.
    pub saddle_t: f64,
    pub samples_per_axis: usize,
    pub bump_peak_slope: f64,
}

/// Samples per axis of the (ξ_s/r, kξ_u/r) ∈ [0, 1/4]² box.
const BOX_SAMPLES: usize = 801;

/// Derivative entries on the sampled box with the `1/k` of B factored out:
/// `(k·B, C)`.
fn derivative_box(p: &ManeParams, bump: &BumpProfile) -> Vec<(f64, f64)> {
    let mut ts: Vec<f64> = (0..BOX_SAMPLES).map(|i| 0.25 * i as f64 / (BOX_SAMPLES - 1) as f64).collect();
    // Densify the short ramps of φ′, where the extremes of B/(C − μ1) sit.
    for j in 0..=200 {
        let u = j as f64 / 200.0;
        ts.push(0.125 + 0.01 * u);
        ts.push(0.25 - 0.01 * u);
    }
    let vals: Vec<(f64, f64)> = ts.iter().map(|&t| bump.eval_with_deriv(t)).collect();
    let mut out = Vec::with_capacity(ts.len() * ts.len());
    for &(ps, dps) in &vals {
        for (&t, &(pt, dpt)) in ts.iter().zip(&vals) {
            let kb = p.lambda * dps * pt * t;
            let c = p.mu2 + p.lambda * ps * (t * dpt + pt);
            out.push((kb, c));
        }
    }
    out
}

fn check_ranges(p: &ManeParams) -> Result<(), ModelError> {
    let ok = p.mu1 > 0.0
        && p.mu1 < 1.0
        && p.mu2 > 1.0
        && p.lambda < 0.0
        && p.k >= 1.0
        && p.support_scale > 0.0
        && p.support_scale <= 1.0
        && p.k.is_finite();
    if !ok {
        return Err(ModelError::ConeFailure { which: Inequality::ParameterRange });
    }
    if !(p.mu1 - p.mu2 < p.lambda && p.lambda < 1.0 - p.mu2) {
        return Err(ModelError::ConeFailure { which: Inequality::SinkRange });
    }
    if p.mu2 + p.lambda - p.mu1 <= 0.0 {
        return Err(ModelError::ConeFailure { which: Inequality::CenterGap });
    }
    Ok(())
}

fn certify(p: &ManeParams, samples: &[(f64, f64)], bump: &BumpProfile) -> Result<ConeCertificate, ModelError> {
    let k = p.k;
    let m = samples.iter().map(|&(kb, c)| kb / (c - p.mu1)).fold(0.0f64, f64::max);
    let c0 = m / k;
    let a = 2.0 * c0;
    let mut inclusion = f64::NEG_INFINITY;
    let mut contraction = f64::NEG_INFINITY;
    for &(kb, c) in samples {
        let b = kb / k;
        inclusion = inclusion.max(b - c * a + p.mu1 * a);
        let q = |s: f64| (c * c - 1.0) * s * s + 2.0 * b * c * s + b * b + p.mu1 * p.mu1 - 1.0;
        let mut worst = q(a).max(q(-a));
        if c * c < 1.0 {
            let vertex = b * c / (1.0 - c * c);
            if vertex.abs() <= a {
                worst = worst.max(q(vertex));
            }
        }
        contraction = contraction.max(worst);
    }
    if !(inclusion < 0.0) {
        return Err(ModelError::ConeFailure { which: Inequality::ConeInclusion });
    }
    if !(contraction < 0.0) {
        return Err(ModelError::ConeFailure { which: Inequality::VectorContraction });
    }
    let target = (1.0 - p.mu2) / p.lambda;
    let saddle_t = crate::util::bisect(0.125, 0.25, 200, |t| bump.eval(t) - target);
    Ok(ConeCertificate {
        params: *p,
        c0,
        aperture: a,
        sink_derivative: p.mu2 + p.lambda,
        inclusion_margin: inclusion,
        contraction_margin: contraction,
        saddle_t,
        samples_per_axis: BOX_SAMPLES,
        bump_peak_slope: bump.peak_slope(),
    })
}

/// Checks the sink range and inequalities (i)–(iii) for the given `k`.
pub fn validate_mane_params(p: &ManeParams) -> Result<ConeCertificate, ModelError> {
    check_ranges(p)?;
    let bump = BumpProfile::standard();
    certify(p, &derivative_box(p, &bump), &bump)
}

/// The smallest integer `k` accepted by [`validate_mane_params`].
pub fn choose_k(mu1: f64, mu2: f64, lambda: f64, support_scale: f64) -> Result<ConeCertificate, ModelError> {
    let base = ManeParams { mu1, mu2, lambda, k: 1.0, support_scale };
    check_ranges(&base)?;
    let bump = BumpProfile::standard();
    let samples = derivative_box(&base, &bump);
    let passes = |k: f64| certify(&ManeParams { k, ..base }, &samples, &bump);
    if let Ok(c) = passes(1.0) {
        return Ok(c);
    }
    let mut lo = 1.0f64;
    let mut hi = 2.0f64;
    loop {
        match passes(hi) {
            Ok(_) => break,
            Err(e) if hi > 1e8 => return Err(e),
            Err(_) => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    while hi - lo > 1.0 {
        let mid = libm::floor(0.5 * (lo + hi));
        if passes(mid).is_ok() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    passes(hi)
}

/// True when the parallelogram `|ξ_s| ≤ r/4, |ξ_u| ≤ r/(4k)` fits strictly
/// inside the unit square centred at its lattice point.
pub fn support_fits(spec: &SpectralData, half_s: f64, half_u: f64) -> bool {
    let es = spec.unit(Sigma::Stable);
    let eu = spec.unit(Sigma::Unstable);
    let ext_x = half_s * es.x.abs() + half_u * eu.x.abs();
    let ext_y = half_s * es.y.abs() + half_u * eu.y.abs();
    ext_x < 0.5 && ext_y < 0.5
}

/// The map g₀.
#[derive(Clone, Debug)]
pub struct ManeSc {
    lin: Linearization,
    params: ManeParams,
    cert: ConeCertificate,
    bump: BumpProfile,
    label: String,
    half_s: f64,
    half_u: f64,
    e_u: LiftPoint,
}

/// Builds g₀ from a linearization and validated parameters.
pub fn build_mane_sc(a: IntMatrix2, p: ManeParams) -> Result<ManeSc, ModelError> {
    let lin = Linearization::new(a)?;
    let cert = validate_mane_params(&p)?;
    let half_s = p.support_scale / 4.0;
    let half_u = p.support_scale / (4.0 * p.k);
    if !support_fits(&lin.spectrum, half_s, half_u) {
        return Err(ModelError::SupportOverlap);
    }
    let e_u = lin.spectrum.unit(Sigma::Unstable);
    Ok(ManeSc {
        lin,
        params: p,
        cert,
        bump: BumpProfile::standard(),
        label: String::from("mane_sc"),
        half_s,
        half_u,
        e_u,
    })
}

impl ManeSc {
    pub fn params(&self) -> &ManeParams {
        &self.params
    }

    pub fn certificate(&self) -> &ConeCertificate {
        &self.cert
    }

    pub fn bump(&self) -> &BumpProfile {
        &self.bump
    }

    pub fn set_label(&mut self, label: &str) {
        self.label = String::from(label);
    }

    /// Eigen-coordinates relative to the nearest lattice point.
    fn local(&self, p: LiftPoint) -> (f64, f64) {
        let q = p - p.round().as_point();
        self.lin.spectrum.eigen_coords(q)
    }

    fn in_support(&self, s: f64, u: f64) -> bool {
        s.abs() < self.half_s && u.abs() < self.half_u
    }

    /// Signed size of the e_u displacement and its eigen-frame gradient.
    fn bump_term(&self, s: f64, u: f64) -> (f64, f64, f64) {
        let r = self.params.support_scale;
        let k = self.params.k;
        let (ps, dps) = self.bump.eval_with_deriv(s / r);
        let t = k * u / r;
        let (pt, dpt) = self.bump.eval_with_deriv(t);
        let lam = self.params.lambda;
        let d = lam * ps * pt * u;
        let dd_s = lam * dps * pt * t / k;
        let dd_u = lam * ps * (t * dpt + pt);
        (d, dd_s, dd_u)
    }

    /// The lower-triangular eigen-frame Jacobian `[[μ1, 0], [B, C]]` at `p`.
    pub fn eigen_jacobian(&self, p: LiftPoint) -> (f64, f64) {
        let (s, u) = self.local(p);
        if !self.in_support(s, u) {
            return (0.0, self.lin.spectrum.mu_u);
        }
        let (_, b, du) = self.bump_term(s, u);
        (b, self.lin.spectrum.mu_u + du)
    }

    /// Distance of each saddle from the sink along e_u.
    pub fn saddle_height(&self) -> f64 {
        self.params.support_scale * self.cert.saddle_t / self.params.k
    }

    /// `[saddle₋, sink, saddle₊]` on the unstable line through 0.
    pub fn center_fixed_points(&self) -> [LiftPoint; 3] {
        let y = self.saddle_height();
        [self.e_u * -y, LiftPoint::ORIGIN, self.e_u * y]
    }

    /// Whether the forward orbit of `x` enters the local basin of the sink,
    /// `|ξ_s| ≤ r/8, |ξ_u| < y*`, within `max_iter` steps.
    pub fn in_sink_basin(&self, x: TorusPoint, max_iter: usize) -> bool {
        let ys = self.saddle_height() * (1.0 - 1e-9);
        let mut z = x;
        for _ in 0..=max_iter {
            let (s, u) = self.local(z.lift());
            if s.abs() <= self.params.support_scale / 8.0 && u.abs() < ys {
                return true;
            }
            z = self.torus_map(z);
        }
        false
    }
}

impl Endomorphism for ManeSc {
    fn linear(&self) -> &Linearization {
        &self.lin
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn lift(&self, p: LiftPoint) -> LiftPoint {
        let ap = self.lin.a_real.apply(p);
        let (s, u) = self.local(p);
        if !self.in_support(s, u) {
            return ap;
        }
        let (d, _, _) = self.bump_term(s, u);
        ap + self.e_u * d
    }

    fn deriv(&self, p: LiftPoint) -> Mat2 {
        let a = self.lin.a_real;
        let (s, u) = self.local(p);
        if !self.in_support(s, u) {
            return a;
        }
        let (_, dd_s, dd_u) = self.bump_term(s, u);
        // ∇ₓd = P⁻ᵀ (∂d/∂ξ_s, ∂d/∂ξ_u).
        let g = self.lin.spectrum.basis_inv.transpose().apply(LiftPoint::new(dd_s, dd_u));
        let e = self.e_u;
        Mat2::new(a.a + e.x * g.x, a.b + e.x * g.y, a.c + e.y * g.x, a.d + e.y * g.y)
    }

    fn displacement_bound(&self) -> f64 {
        self.params.lambda.abs() * self.half_u
    }

    fn displacement(&self, p: LiftPoint) -> LiftPoint {
        let (s, u) = self.local(p);
        if !self.in_support(s, u) {
            return LiftPoint::ORIGIN;
        }
        self.e_u * self.bump_term(s, u).0
    }

    fn displacement_eigen(&self, p: LiftPoint) -> (f64, f64) {
        let (s, u) = self.local(p);
        if !self.in_support(s, u) {
            return (0.0, 0.0);
        }
        (0.0, self.bump_term(s, u).0)
    }

    fn has_stable_displacement(&self) -> bool {
        false
    }

    fn perturbation_boxes(&self) -> Vec<SampleBox> {
        let spec = &self.lin.spectrum;
        alloc::vec![SampleBox {
            center: LiftPoint::ORIGIN,
            half_s: spec.unit(Sigma::Stable) * self.half_s,
            half_u: self.e_u * self.half_u,
        }]
    }
}
