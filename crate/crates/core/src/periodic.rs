//! Periodic points by Newton's method on `Fⁿ(x) = x + m`, their Lyapunov
//! exponents and the exponent-rigidity report.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::exec::{Executor, Sequential};
use crate::hyperbolicity::{bundle_e1, bundle_e2_default, Bundle, HypError, BUNDLE_DEPTH_MAX};
use crate::linalg::Mat2;
use crate::linear::{IntMatrix2, LinearError, SpectralData};
use crate::models::Endomorphism;
use crate::torus::{project, torus_dist, DeckVector, LiftPoint, TorusPoint};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PeriodicError {
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error("deck-class budget too small: a solution of class ({}, {}) lies outside the deck-class budget", .0.n1, .0.n2)]
    BudgetTooSmall(DeckVector),
}

/// Orbits closer than this on the torus are identified.
pub const DEDUP_TOL: f64 = 1e-8;

/// Largest accepted `|Fⁿ(x) − x − m|`.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    /// Seeds per axis of the unit-square grid and of each perturbation box.
    pub seeds_per_axis: usize,
    /// Classes `m` with `(Aⁿ − I)⁻¹ m ∈ [−inflation, 1 + inflation]²`.
    pub inflation: f64,
    pub max_steps: usize,
    pub halvings: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { seeds_per_axis: 64, inflation: 0.5, max_steps: 60, halvings: 8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeriodicOrbit {
    pub period: u32,
    /// Smallest `p | period` with `fᵖ(x) = x`.
    pub prime_period: u32,
    /// `m` with `Fⁿ(x̃) = x̃ + m` for the lift `x̃ = point ∈ [0, 1)²`.
    pub deck_class: DeckVector,
    pub point: TorusPoint,
    /// Lexicographically smallest point of the cycle.
    pub cycle_rep: TorusPoint,
    /// `DFⁿ` at the point.
    pub monodromy: Mat2,
    pub lambda_small: f64,
    pub lambda_big: f64,
    /// Whether the monodromy has a complex pair (exponents are then equal).
    pub complex: bool,
    pub residual: f64,
}

/// `Fⁿ(x) − x − m` evaluated with the integer part of the orbit kept
/// exact, together with `DFⁿ(x)`.
fn orbit_residual<M: Endomorphism + ?Sized>(m: &M, n: u32, x: LiftPoint, class: DeckVector) -> (LiftPoint, Mat2) {
    let a = m.linearization();
    let start = x.floor();
    let mut w = x - start.as_point();
    let w0 = w;
    let mut big = start;
    let mut jac = Mat2::IDENTITY;
    for _ in 0..n {
        jac = m.deriv(w) * jac;
        let z = m.lift(w);
        let k = z.floor();
        w = z - k.as_point();
        big = a.apply(big) + k;
    }
    let d = big - start - class;
    (w - w0 + d.as_point(), jac)
}

fn pow_minus_identity(a: IntMatrix2, n: u32) -> Result<IntMatrix2, LinearError> {
    let p = a.checked_pow(n).ok_or(LinearError::Overflow)?;
    let q = IntMatrix2::new(p.a - 1, p.b, p.c, p.d - 1);
    if q.det() == 0 {
        return Err(LinearError::Degenerate);
    }
    Ok(q)
}

/// `(λ_small, λ_big, complex)` of an `n`-step monodromy.
pub fn monodromy_exponents(mono: &Mat2, n: u32) -> (f64, f64, bool) {
    let t = mono.trace();
    let det = mono.det();
    let disc = t * t - 4.0 * det;
    let nf = n as f64;
    if disc < 0.0 {
        let l = 0.5 * libm::log(det.abs()) / nf;
        return (l, l, true);
    }
    // Large root without cancellation, small one from the determinant.
    let big = 0.5 * (t + libm::copysign(libm::sqrt(disc), t));
    let small = if big == 0.0 { 0.0 } else { det / big };
    let (a, b) = (libm::log(small.abs()) / nf, libm::log(big.abs()) / nf);
    (a.min(b), a.max(b), false)
}

fn newton<M: Endomorphism + ?Sized>(
    m: &M,
    n: u32,
    class: DeckVector,
    seed: LiftPoint,
    opts: &SearchOptions,
) -> Option<(LiftPoint, Mat2, f64)> {
    let mut x = seed;
    let (mut g, mut jac) = orbit_residual(m, n, x, class);
    let mut gn = g.norm();
    for _ in 0..opts.max_steps {
        if gn < 1e-14 {
            break;
        }
        let step = jac.sub_identity().solve(g)?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..=opts.halvings {
            let y = x - step * t;
            let (gy, jy) = orbit_residual(m, n, y, class);
            if gy.norm() < gn {
                x = y;
                g = gy;
                jac = jy;
                gn = gy.norm();
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        if !x.is_finite() || x.max_abs() > 1e6 {
            return None;
        }
    }
    if gn < RESIDUAL_TOL && jac.sub_identity().det().abs() > 1e-12 {
        Some((x, jac, gn))
    } else {
        None
    }
}

fn lex_cmp(a: &TorusPoint, b: &TorusPoint) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

fn make_orbit<M: Endomorphism + ?Sized>(
    m: &M,
    n: u32,
    class: DeckVector,
    x: LiftPoint,
    mono: Mat2,
    residual: f64,
) -> Result<PeriodicOrbit, LinearError> {
    let k = x.floor();
    let q = pow_minus_identity(m.linearization(), n)?;
    let deck_class = class - q.apply(k);
    let point = project(x);
    let mut cycle = alloc::vec![point];
    let mut z = point;
    let mut prime = n;
    for p in 1..=n {
        z = m.torus_map(z);
        if torus_dist(z, point) < DEDUP_TOL {
            prime = p;
            break;
        }
        cycle.push(z);
    }
    let cycle_rep = cycle.into_iter().min_by(lex_cmp).unwrap_or(point);
    let (lambda_small, lambda_big, complex) = monodromy_exponents(&mono, n);
    Ok(PeriodicOrbit {
        period: n,
        prime_period: prime,
        deck_class,
        point,
        cycle_rep,
        monodromy: mono,
        lambda_small,
        lambda_big,
        complex,
        residual,
    })
}

/// Solutions of `Fⁿ(x) = x + deck` from the given seeds, deduplicated on
/// the torus and reported at their representative in `[0, 1)²`.
pub fn find_periodic<M: Endomorphism + ?Sized>(
    m: &M,
    n: u32,
    deck: DeckVector,
    seeds: &[LiftPoint],
) -> Result<Vec<PeriodicOrbit>, PeriodicError> {
    let opts = SearchOptions::default();
    let mut out = Vec::new();
    for &s in seeds {
        if let Some((x, mono, r)) = newton(m, n, deck, s, &opts) {
            out.push(make_orbit(m, n, deck, x, mono, r)?);
        }
    }
    Ok(dedup(out))
}

fn dedup(mut orbits: Vec<PeriodicOrbit>) -> Vec<PeriodicOrbit> {
    use alloc::collections::BTreeMap;
    orbits.sort_by(|a, b| lex_cmp(&a.point, &b.point).then(a.residual.total_cmp(&b.residual)));
    // Cells of side 1e-6 on the torus; duplicates land in neighbouring cells.
    const CELLS: i64 = 1_000_000;
    let cell = |p: &TorusPoint| ((p.x * CELLS as f64) as i64, (p.y * CELLS as f64) as i64);
    let mut grid: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    let mut out: Vec<PeriodicOrbit> = Vec::with_capacity(orbits.len());
    for o in orbits {
        let (cx, cy) = cell(&o.point);
        let mut dup = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                let key = ((cx + dx).rem_euclid(CELLS), (cy + dy).rem_euclid(CELLS));
                if let Some(ids) = grid.get(&key) {
                    if ids.iter().any(|&k| torus_dist(out[k].point, o.point) < DEDUP_TOL) {
                        dup = true;
                        break 'scan;
                    }
                }
            }
        }
        if !dup {
            grid.entry((cx.rem_euclid(CELLS), cy.rem_euclid(CELLS))).or_default().push(out.len());
            out.push(o);
        }
    }
    out
}

/// All deck classes `m` with `(Aⁿ − I)⁻¹ m` in the inflated unit square.
pub fn deck_class_budget(a: IntMatrix2, n: u32, inflation: f64) -> Result<Vec<DeckVector>, LinearError> {
    let q = pow_minus_identity(a, n)?;
    let qr = q.to_real();
    let qi = qr.inverse().ok_or(LinearError::Degenerate)?;
    let (lo, hi) = (-inflation, 1.0 + inflation);
    let corners = [LiftPoint::new(lo, lo), LiftPoint::new(lo, hi), LiftPoint::new(hi, lo), LiftPoint::new(hi, hi)];
    let img: Vec<LiftPoint> = corners.iter().map(|c| qr.apply(*c)).collect();
    let bx = |f: fn(&LiftPoint) -> f64| {
        let v: Vec<f64> = img.iter().map(f).collect();
        (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    };
    let (x0, x1) = bx(|p| p.x);
    let (y0, y1) = bx(|p| p.y);
    let mut out = Vec::new();
    for i in libm::floor(x0) as i64..=libm::ceil(x1) as i64 {
        for j in libm::floor(y0) as i64..=libm::ceil(y1) as i64 {
            let x = qi.apply(LiftPoint::new(i as f64, j as f64));
            if x.x >= lo && x.x <= hi && x.y >= lo && x.y <= hi {
                out.push(DeckVector::new(i, j));
            }
        }
    }
    Ok(out)
}

/// Every period-`n` point found from (i) the linear solution of each deck
/// class in the budget and (ii) seed grids on the unit square and on the
/// model's perturbation boxes, whose class is read off at the seed.
pub fn enumerate_periodic<M: Endomorphism + ?Sized>(m: &M, n: u32, opts: &SearchOptions) -> Result<Vec<PeriodicOrbit>, PeriodicError> {
    enumerate_periodic_with(&Sequential, m, n, opts)
}

pub fn enumerate_periodic_with<E, M>(exec: &E, m: &M, n: u32, opts: &SearchOptions) -> Result<Vec<PeriodicOrbit>, PeriodicError>
where
    E: Executor,
    M: Endomorphism + ?Sized,
{
    let a = m.linearization();
    let q = pow_minus_identity(a, n)?.to_real();
    let qi = q.inverse().ok_or(LinearError::Degenerate)?;
    let classes = deck_class_budget(a, n, opts.inflation)?;
    let mut seeds: Vec<(Option<DeckVector>, LiftPoint)> = classes
        .iter()
        .map(|&c| (Some(c), qi.apply(c.as_point())))
        .collect();
    for x in crate::util::unit_grid(opts.seeds_per_axis) {
        for y in crate::util::unit_grid(opts.seeds_per_axis) {
            seeds.push((None, LiftPoint::new(x, y)));
        }
    }
    for b in m.perturbation_boxes() {
        for p in b.grid(opts.seeds_per_axis) {
            seeds.push((None, p));
        }
    }
    let found = exec.map(seeds.len(), |i| {
        let (class, s) = seeds[i];
        let class = class.unwrap_or_else(|| {
            let (g, _) = orbit_residual(m, n, s, DeckVector::ZERO);
            DeckVector::new(libm::round(g.x) as i64, libm::round(g.y) as i64)
        });
        newton(m, n, class, s, opts).map(|(x, mono, r)| (class, x, mono, r))
    });
    // A point of [0, 1)² whose class lies outside the budget means the
    // budget can miss classes; Newton wandering to a translate is harmless.
    let budget: alloc::collections::BTreeSet<(i64, i64)> = classes.iter().map(|c| (c.n1, c.n2)).collect();
    let mut orbits = Vec::new();
    for (class, x, mono, r) in found.into_iter().flatten() {
        let o = make_orbit(m, n, class, x, mono, r)?;
        if !budget.contains(&(o.deck_class.n1, o.deck_class.n2)) {
            return Err(PeriodicError::BudgetTooSmall(o.deck_class));
        }
        orbits.push(o);
    }
    Ok(dedup(orbits))
}

/// `(λ_small, λ_big)` of the orbit's monodromy.
pub fn lyapunov_at_orbit(orbit: &PeriodicOrbit) -> (f64, f64) {
    let (s, b, _) = monodromy_exponents(&orbit.monodromy, orbit.period);
    (s, b)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RigidityRow {
    pub orbit: PeriodicOrbit,
    pub in_lambda: bool,
    pub lambda_small: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RigidityReport {
    pub model_label: String,
    /// `log|μ_s|` of A.
    pub target: f64,
    /// Sorted by deviation, largest first.
    pub rows: Vec<RigidityRow>,
}

impl RigidityReport {
    pub fn max_deviation(&self, in_lambda: bool) -> f64 {
        self.rows.iter().filter(|r| r.in_lambda == in_lambda).map(|r| r.deviation).fold(0.0, f64::max)
    }

    pub fn members(&self) -> usize {
        self.rows.iter().filter(|r| r.in_lambda).count()
    }
}

pub fn rigidity_report<M, F>(m: &M, spec: &SpectralData, orbits: &[PeriodicOrbit], in_lambda: F) -> RigidityReport
where
    M: Endomorphism + ?Sized,
    F: Fn(&PeriodicOrbit) -> bool,
{
    let target = libm::log(spec.mu_s.abs());
    let mut rows: Vec<RigidityRow> = orbits
        .iter()
        .map(|o| RigidityRow {
            orbit: o.clone(),
            in_lambda: in_lambda(o),
            lambda_small: o.lambda_small,
            deviation: (o.lambda_small - target).abs(),
        })
        .collect();
    rows.sort_by(|a, b| b.deviation.total_cmp(&a.deviation).then(lex_cmp(&a.orbit.point, &b.orbit.point)));
    RigidityReport { model_label: String::from(m.label()), target, rows }
}

/// `(1/N) Σ log|DF(xⱼ) vⱼ|` along the forward orbit, `vⱼ` a unit vector
/// of the selected bundle at `xⱼ`.
pub fn finite_time_center_exponent<M: Endomorphism + ?Sized>(
    m: &M,
    x: TorusPoint,
    steps: usize,
    which: Bundle,
) -> Result<f64, HypError> {
    let mut p = x.lift();
    let mut sum = 0.0;
    match which {
        Bundle::E2 => {
            // E² is carried forward by DF, which is also the stable way to
            // follow it.
            let mut v = bundle_e2_default(m, p)?.unit();
            for _ in 0..steps {
                let w = m.deriv(p).apply(v);
                sum += libm::log(w.norm());
                v = w.normalized();
                p = m.lift(p).reduced();
            }
        }
        Bundle::E1 => {
            for _ in 0..steps {
                let v = bundle_e1(m, p, BUNDLE_DEPTH_MAX)?.unit();
                sum += libm::log(m.deriv(p).apply(v).norm());
                p = m.lift(p).reduced();
            }
        }
    }
    Ok(sum / steps.max(1) as f64)
}
