//! The semi-conjugacy `H = Id + uˢe_s + uᵘe_u` with `H∘F = A∘H`, as the
//! truncated series
//!
//! `uᵘ(x) = Σ_{j<dᵤ} μᵤ^{−(j+1)} Δᵘ(Fʲx)`,  `uˢ(x) = −Σ_{1≤j≤dₛ} μₛ^{j−1} Δˢ(F^{−j}x)`,
//!
//! and the diagnostics built on it: conjugation residual, deck defect,
//! stable decay, fibers along center leaves and the Λ estimate.
//!
//! Lift points are handled as a fractional part plus an exact integer
//! part. Forward orbits only need the fractional part (Δ is periodic);
//! backward orbits carry the integer part through
//! `F⁻¹(w + r + Aq) = F⁻¹(w + r) + q`, with `r` the canonical coset
//! representative, so deck shifts by large integer vectors stay exact.

use alloc::string::String;
use alloc::vec::Vec;

use crate::exec::{Executor, Sequential};
use crate::hyperbolicity::{bundle_e1, bundle_e2_default, integrate_leaf, Bundle, HypError, Leaf, BUNDLE_DEPTH_MAX};
use crate::linear::{IntMatrix2, Sigma, SpectralData};
use crate::models::{lift_inverse, Endomorphism, ModelError};
use crate::torus::{project, DeckVector, LiftPoint, TorusPoint};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SemiError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("center leaf integration failed: {0}")]
    LeafIntegrationFailure(HypError),
}

impl From<HypError> for SemiError {
    fn from(e: HypError) -> Self {
        match e {
            HypError::Model(m) => SemiError::Model(m),
            other => SemiError::LeafIntegrationFailure(other),
        }
    }
}

/// Fibers shorter than this (leaf arclength) count as single points.
pub const PLATEAU_TOL: f64 = 1e-7;

/// Variation of `Hᵘ` below which it counts as constant. Well above the
/// truncation error and rounding, and small enough that a fiber through an
/// injective point comes out far below `PLATEAU_TOL`.
pub const FLAT_TOL: f64 = 1e-11;

/// Bisection steps for fiber endpoints.
const ENDPOINT_BISECTIONS: usize = 40;

/// A lift point `frac + int` with `int` exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitPoint {
    pub frac: LiftPoint,
    pub int: (i128, i128),
}

impl SplitPoint {
    pub fn new(x: LiftPoint) -> Self {
        let k = x.floor();
        SplitPoint { frac: x - k.as_point(), int: (k.n1 as i128, k.n2 as i128) }
    }

    pub fn shifted(self, n: DeckVector) -> Self {
        SplitPoint { int: (self.int.0 + n.n1 as i128, self.int.1 + n.n2 as i128), ..self }
    }

    /// `F(x)`, using `F(w + N) = F(w) + A N`.
    pub fn image<M: Endomorphism + ?Sized>(self, m: &M) -> Self {
        let f = SplitPoint::new(m.lift(self.frac));
        let an = m.linearization().apply_wide(self.int);
        SplitPoint { frac: f.frac, int: (f.int.0 + an.0, f.int.1 + an.1) }
    }

    /// The point as floats (loses the exactness for large integer parts).
    pub fn to_lift(self) -> LiftPoint {
        self.frac + LiftPoint::new(self.int.0 as f64, self.int.1 as f64)
    }
}

/// `H` for one model at fixed depths.
#[derive(Clone, Debug)]
pub struct SemiConjugacy<'a, M: Endomorphism + ?Sized> {
    model: &'a M,
    pub model_label: String,
    pub spec: SpectralData,
    pub depth_s: usize,
    pub depth_u: usize,
    /// Bound on the tail of each series.
    pub trunc_bound: f64,
    /// Sampled `sup|H − Id|`.
    pub c_h_est: f64,
    /// Bound on the eigen-components of Δ.
    pub delta_norm: f64,
    adj: IntMatrix2,
    det: i128,
}

/// `‖Δ‖·(1/(1−|μₛ|) + 1/(|μᵤ|−1))`, the a priori bound for `sup|H − Id|`.
pub fn c_h_bound(spec: &SpectralData, delta_norm: f64) -> f64 {
    delta_norm * (1.0 / (1.0 - spec.mu_s.abs()) + 1.0 / (spec.mu_u.abs() - 1.0))
}

pub fn solve_h<M: Endomorphism + ?Sized>(m: &M, depth_s: usize, depth_u: usize) -> Result<SemiConjugacy<'_, M>, SemiError> {
    let spec = m.linear().spectrum;
    let pinv = spec.basis_inv;
    let row = libm::hypot(pinv.a, pinv.b).max(libm::hypot(pinv.c, pinv.d));
    let delta_norm = m.displacement_bound() * row;
    let ms = spec.mu_s.abs();
    let mu = spec.mu_u.abs();
    let trunc_bound =
        delta_norm * (libm::pow(ms, depth_s as f64) / (1.0 - ms) + libm::pow(mu, -(depth_u as f64)) / (1.0 - 1.0 / mu));
    let a = spec.matrix;
    let mut h = SemiConjugacy {
        model: m,
        model_label: String::from(m.label()),
        spec,
        depth_s,
        depth_u,
        trunc_bound,
        c_h_est: 0.0,
        delta_norm,
        adj: a.adjugate(),
        det: a.det() as i128,
    };
    let mut samples = crate::hyperbolicity::grid_points(32);
    for b in m.perturbation_boxes() {
        samples.extend(b.grid(24));
    }
    let mut c = 0.0f64;
    for p in samples {
        let (s, u) = h.correction(p)?;
        c = c.max((spec.unit(Sigma::Stable) * s + spec.unit(Sigma::Unstable) * u).norm());
    }
    h.c_h_est = c;
    Ok(h)
}

impl<'a, M: Endomorphism + ?Sized> SemiConjugacy<'a, M> {
    pub fn model(&self) -> &'a M {
        self.model
    }

    fn u_unstable(&self, frac: LiftPoint) -> f64 {
        let mut w = frac;
        let inv = 1.0 / self.spec.mu_u;
        let mut weight = inv;
        let mut sum = 0.0;
        for _ in 0..self.depth_u {
            sum += weight * self.model.displacement_eigen(w).1;
            w = self.model.lift(w).reduced();
            weight *= inv;
        }
        sum
    }

    fn u_stable(&self, x: SplitPoint) -> Result<f64, ModelError> {
        if !self.model.has_stable_displacement() {
            return Ok(0.0);
        }
        let cosets = &self.model.linear().cosets;
        let mut z = x;
        let mut weight = 1.0;
        let mut sum = 0.0;
        for _ in 0..self.depth_s {
            let r = cosets.canonical(z.int);
            let d = self.adj.apply_wide((z.int.0 - r.0, z.int.1 - r.1));
            debug_assert!(d.0 % self.det == 0 && d.1 % self.det == 0);
            let q = (d.0 / self.det, d.1 / self.det);
            let y = lift_inverse(self.model, z.frac + LiftPoint::new(r.0 as f64, r.1 as f64))?;
            let nz = SplitPoint::new(y);
            z = SplitPoint { frac: nz.frac, int: (nz.int.0 + q.0, nz.int.1 + q.1) };
            sum -= weight * self.model.displacement_eigen(z.frac).0;
            weight *= self.spec.mu_s;
        }
        Ok(sum)
    }

    /// `(uˢ, uᵘ)` at a split point.
    pub fn correction_split(&self, x: SplitPoint) -> Result<(f64, f64), ModelError> {
        Ok((self.u_stable(x)?, self.u_unstable(x.frac)))
    }

    pub fn correction(&self, x: LiftPoint) -> Result<(f64, f64), ModelError> {
        self.correction_split(SplitPoint::new(x))
    }

    /// `H(x) − x` as a vector.
    pub fn displacement(&self, x: SplitPoint) -> Result<LiftPoint, ModelError> {
        let (s, u) = self.correction_split(x)?;
        Ok(self.spec.unit(Sigma::Stable) * s + self.spec.unit(Sigma::Unstable) * u)
    }

    pub fn eval(&self, x: LiftPoint) -> Result<LiftPoint, ModelError> {
        Ok(x + self.displacement(SplitPoint::new(x))?)
    }

    /// Eigen-coordinates of `H(x)`.
    pub fn eval_eigen(&self, x: LiftPoint) -> Result<(f64, f64), ModelError> {
        let (s, u) = self.correction(x)?;
        let (xs, xu) = self.spec.eigen_coords(x);
        Ok((xs + s, xu + u))
    }

    /// `H(x + n) − H(x) − n`.
    pub fn deck_difference(&self, x: LiftPoint, n: DeckVector) -> Result<LiftPoint, ModelError> {
        let p = SplitPoint::new(x);
        Ok(self.displacement(p.shifted(n))? - self.displacement(p)?)
    }
}

/// `|H(F(x)) − A H(x)| = |Δ(x) + u(F(x)) − A u(x)|` at one point.
pub fn conj_residual_at<M: Endomorphism + ?Sized>(h: &SemiConjugacy<'_, M>, x: LiftPoint) -> Result<f64, ModelError> {
    let m = h.model;
    let p = SplitPoint::new(x);
    let u = h.displacement(p)?;
    let uf = h.displacement(p.image(m))?;
    let r = m.displacement(p.frac) + uf - m.linear().a_real.apply(u);
    Ok(r.norm())
}

pub fn conj_residual<M: Endomorphism + ?Sized>(h: &SemiConjugacy<'_, M>, grid_n: usize) -> Result<f64, ModelError> {
    conj_residual_with(&Sequential, h, &crate::hyperbolicity::grid_points(grid_n))
}

fn sup_over<E, F>(exec: &E, n: usize, f: F) -> Result<f64, ModelError>
where
    E: Executor,
    F: Fn(usize) -> Result<f64, ModelError> + Sync + Send,
{
    let mut worst = 0.0f64;
    for r in exec.map(n, f) {
        worst = worst.max(r?);
    }
    Ok(worst)
}

pub fn conj_residual_with<E, M>(exec: &E, h: &SemiConjugacy<'_, M>, points: &[LiftPoint]) -> Result<f64, ModelError>
where
    E: Executor,
    M: Endomorphism + ?Sized,
{
    sup_over(exec, points.len(), |i| conj_residual_at(h, points[i]))
}

/// `(d₁, d₂)`, `dᵢ = sup|H(x + eᵢ) − H(x) − eᵢ|` over a grid.
pub fn deck_commutation_defect<M: Endomorphism + ?Sized>(h: &SemiConjugacy<'_, M>, grid_n: usize) -> Result<(f64, f64), ModelError> {
    deck_commutation_defect_with(&Sequential, h, &crate::hyperbolicity::grid_points(grid_n))
}

pub fn deck_commutation_defect_with<E, M>(exec: &E, h: &SemiConjugacy<'_, M>, points: &[LiftPoint]) -> Result<(f64, f64), ModelError>
where
    E: Executor,
    M: Endomorphism + ?Sized,
{
    let d1 = sup_over(exec, points.len(), |i| Ok(h.deck_difference(points[i], DeckVector::E1)?.norm()))?;
    let d2 = sup_over(exec, points.len(), |i| Ok(h.deck_difference(points[i], DeckVector::E2)?.norm()))?;
    Ok((d1, d2))
}

/// `(k, |H(x + n*) − H(x) − n*|)` for `n* = Aᵏ e₁`, `k = 1..=k_max`.
pub fn stable_decay_check<M: Endomorphism + ?Sized>(
    h: &SemiConjugacy<'_, M>,
    x: LiftPoint,
    k_max: u32,
) -> Result<Vec<(u32, f64)>, ModelError> {
    let a = h.spec.matrix;
    let mut n = DeckVector::E1;
    let mut out = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        n = a.apply(n);
        out.push((k, h.deck_difference(x, n)?.norm()));
    }
    Ok(out)
}

/// Slope of `log defect_k` against `k` over `k ≥ k_min`, ignoring values
/// at or below `floor`; `None` with fewer than two usable points.
pub fn decay_slope(rows: &[(u32, f64)], k_min: u32, floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(k, d)| *k >= k_min && *d > floor)
        .map(|&(k, d)| (k as f64, libm::log(d)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    crate::util::linear_fit(&pts).map(|(slope, _)| slope)
}

/// `|⟨H(x + n) − H(x) − n, e_u⟩|` in eigen-coordinates.
pub fn unstable_deck_component<M: Endomorphism + ?Sized>(
    h: &SemiConjugacy<'_, M>,
    x: LiftPoint,
    n: DeckVector,
) -> Result<f64, ModelError> {
    let p = SplitPoint::new(x);
    let (_, a) = h.correction_split(p.shifted(n))?;
    let (_, b) = h.correction_split(p)?;
    Ok((a - b).abs())
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FiberInterval {
    pub leaf_id: u64,
    /// Arclength parameters of x⁻ and x⁺ relative to the base point.
    pub t_minus: f64,
    pub t_plus: f64,
    pub diameter: f64,
    /// Whether an end of the integrated leaf was reached.
    pub clipped: bool,
}

/// Point of the polyline at arclength parameter `t`.
pub fn leaf_point(leaf: &Leaf, t: f64) -> LiftPoint {
    let ps = &leaf.params;
    let n = ps.len();
    if n == 1 {
        return leaf.points[0];
    }
    let i = match ps.binary_search_by(|p| p.total_cmp(&t)) {
        Ok(i) => return leaf.points[i],
        Err(i) => i.clamp(1, n - 1),
    };
    let (t0, t1) = (ps[i - 1], ps[i]);
    let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    leaf.points[i - 1] + (leaf.points[i] - leaf.points[i - 1]) * s
}

/// The e_u-coordinate of `H`.
fn h_unstable<M: Endomorphism + ?Sized>(h: &SemiConjugacy<'_, M>, p: LiftPoint) -> Result<f64, ModelError> {
    Ok(h.eval_eigen(p)?.1)
}

/// The maximal parameter interval around `t0` on which `Hᵘ` stays within
/// `flat_tol` of `Hᵘ(t0)`.
pub fn fiber_on_leaf<M: Endomorphism + ?Sized>(
    h: &SemiConjugacy<'_, M>,
    leaf: &Leaf,
    t0: f64,
    flat_tol: f64,
) -> Result<FiberInterval, ModelError> {
    let base = h_unstable(h, leaf_point(leaf, t0))?;
    let lo = leaf.params[0];
    let hi = *leaf.params.last().unwrap();
    let flat = |t: f64| -> Result<bool, ModelError> { Ok((h_unstable(h, leaf_point(leaf, t))? - base).abs() <= flat_tol) };
    let mut clipped = false;
    let mut end = |dir: f64| -> Result<f64, ModelError> {
        let limit = if dir > 0.0 { hi - t0 } else { t0 - lo };
        // Bracket by doubling, then bisect.
        let mut inside = 0.0;
        let mut step = (limit * 1e-6).max(1e-12);
        let outside = loop {
            let s = step.min(limit);
            if !flat(t0 + dir * s)? {
                break s;
            }
            inside = s;
            if s >= limit {
                clipped = true;
                return Ok(limit);
            }
            step *= 2.0;
        };
        let (mut a, mut b) = (inside, outside);
        for _ in 0..ENDPOINT_BISECTIONS {
            let c = 0.5 * (a + b);
            if flat(t0 + dir * c)? {
                a = c;
            } else {
                b = c;
            }
        }
        Ok(a)
    };
    let up = end(1.0)?;
    let down = end(-1.0)?;
    Ok(FiberInterval { leaf_id: 0, t_minus: -down, t_plus: up, diameter: up + down, clipped })
}

/// The fiber of `x` on its center (E²) leaf of length `leaf_arclen`.
pub fn fiber_interval<M: Endomorphism + ?Sized>(
    h: &SemiConjugacy<'_, M>,
    x: LiftPoint,
    leaf_arclen: f64,
) -> Result<FiberInterval, SemiError> {
    let step = (leaf_arclen / 64.0).min(1e-3);
    let leaf = integrate_leaf(h.model, x, Bundle::E2, leaf_arclen, step)?;
    Ok(fiber_on_leaf(h, &leaf, 0.0, FLAT_TOL)?)
}

/// Whether `x` lies within `tol` (leaf arclength) of an endpoint of its
/// fiber. Since `Hᵘ` is monotone along center leaves, this holds iff `Hᵘ`
/// is not constant on the leaf segment of radius `tol` around `x`; the
/// segment is taken along E²(x), its curvature being negligible at
/// that scale.
pub fn lambda_membership<M: Endomorphism + ?Sized>(
    h: &SemiConjugacy<'_, M>,
    x: TorusPoint,
    tol: f64,
) -> Result<bool, SemiError> {
    let p = x.lift();
    let v = bundle_e2_default(h.model, p)?.unit();
    let base = h_unstable(h, p)?;
    let a = h_unstable(h, p + v * tol)?;
    let b = h_unstable(h, p - v * tol)?;
    Ok((a - base).abs() > FLAT_TOL || (b - base).abs() > FLAT_TOL)
}

/// Searches `(t_from, t_to)` on the leaf for a point with a fiber shorter
/// than `tol`, skipping over plateaus; `false` if none is found in 40
/// rounds.
pub fn plateau_cantor_probe<M: Endomorphism + ?Sized>(
    h: &SemiConjugacy<'_, M>,
    leaf: &Leaf,
    t_from: f64,
    t_to: f64,
    tol: f64,
) -> Result<bool, ModelError> {
    let (mut a, mut b) = (t_from.min(t_to), t_from.max(t_to));
    for _ in 0..ENDPOINT_BISECTIONS {
        if b - a <= 0.0 {
            return Ok(false);
        }
        let c = 0.5 * (a + b);
        let f = fiber_on_leaf(h, leaf, c, FLAT_TOL)?;
        if f.diameter < tol {
            return Ok(true);
        }
        // Continue in the larger remainder beside the plateau.
        let (lo, hi) = (c + f.t_minus, c + f.t_plus);
        if lo - a >= b - hi {
            b = lo;
        } else {
            a = hi;
        }
    }
    Ok(false)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AtlasRow {
    pub x: f64,
    pub y: f64,
    pub member: bool,
    /// Width of the flat part of `Hᵘ` within `tol` of the point (0 to `2·tol`).
    pub fiber_diameter: f64,
    /// `log|DF(x) v|` for a unit vector `v` of E²(x).
    pub center_log_deriv: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaAtlas {
    pub grid_n: usize,
    pub tol: f64,
    pub rows: Vec<AtlasRow>,
    pub members: usize,
    /// Fraction of members whose image is not a member.
    pub invariance_defect: f64,
    /// Fraction of probed members with a non-member stable neighbour.
    pub saturation_defect: f64,
    pub min_center_log_deriv: f64,
}

/// One atlas row: membership, local flat width and center log-derivative.
fn atlas_row<M: Endomorphism + ?Sized>(h: &SemiConjugacy<'_, M>, p: LiftPoint, tol: f64) -> Result<AtlasRow, SemiError> {
    let m = h.model;
    let v = bundle_e2_default(m, p)?.unit();
    let base = h_unstable(h, p)?;
    let flat = |s: f64| -> Result<bool, ModelError> { Ok((h_unstable(h, p + v * s)? - base).abs() <= FLAT_TOL) };
    let up = flat(tol)?;
    let down = flat(-tol)?;
    let member = !(up && down);
    let width = |dir: f64, full: bool| -> Result<f64, ModelError> {
        if full {
            return Ok(tol);
        }
        let (mut a, mut b) = (0.0, tol);
        for _ in 0..20 {
            let c = 0.5 * (a + b);
            if flat(dir * c)? {
                a = c;
            } else {
                b = c;
            }
        }
        Ok(a)
    };
    let diameter = width(1.0, up)? + width(-1.0, down)?;
    let center = libm::log(m.deriv(p).apply(v).norm());
    Ok(AtlasRow { x: p.x, y: p.y, member, fiber_diameter: diameter, center_log_deriv: center })
}

/// Λ membership over an `n × n` grid with invariance, saturation and
/// center-expansion statistics.
pub fn lambda_atlas<M: Endomorphism + ?Sized>(h: &SemiConjugacy<'_, M>, grid_n: usize, tol: f64) -> Result<LambdaAtlas, SemiError> {
    lambda_atlas_with(&Sequential, h, grid_n, tol)
}

pub fn lambda_atlas_with<E, M>(exec: &E, h: &SemiConjugacy<'_, M>, grid_n: usize, tol: f64) -> Result<LambdaAtlas, SemiError>
where
    E: Executor,
    M: Endomorphism + ?Sized,
{
    let m = h.model;
    let pts = crate::hyperbolicity::grid_points(grid_n);
    let rows = exec.map(pts.len(), |i| atlas_row(h, pts[i], tol));
    let rows: Vec<AtlasRow> = rows.into_iter().collect::<Result<_, _>>()?;
    let members: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].member).collect();
    let image = exec.map(members.len(), |j| {
        let p = pts[members[j]];
        lambda_membership(h, project(m.lift(p)), tol)
    });
    let mut lost = 0usize;
    for r in image {
        if !r? {
            lost += 1;
        }
    }
    // Stable neighbours of every 7th member.
    let probe: Vec<usize> = members.iter().copied().step_by(7).collect();
    let sat = exec.map(probe.len(), |j| -> Result<bool, SemiError> {
        let p = pts[probe[j]];
        let e1 = bundle_e1(m, p, BUNDLE_DEPTH_MAX)?.unit();
        let delta = 1e-3;
        Ok(lambda_membership(h, project(p + e1 * delta), tol)? && lambda_membership(h, project(p - e1 * delta), tol)?)
    });
    let mut unsat = 0usize;
    for r in sat {
        if !r? {
            unsat += 1;
        }
    }
    let min_c = members.iter().map(|&i| rows[i].center_log_deriv).fold(f64::INFINITY, f64::min);
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(LambdaAtlas {
        grid_n,
        tol,
        members: members.len(),
        invariance_defect: frac(lost, members.len()),
        saturation_defect: frac(unsat, probe.len()),
        min_center_log_deriv: min_c,
        rows,
    })
}
