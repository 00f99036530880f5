//! Cone fields, the domination inequalities, the bundles E¹ and E², the
//! specialness detector and leaf diagnostics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{Executor, Sequential};
use crate::linalg::Mat2;
use crate::linear::{Sigma, SpectralData};
use crate::models::{lift_inverse, ConeCertificate, CuCertificate, Endomorphism, LinearModel, ModelError};
use crate::torus::{direction_dist, Direction, LiftPoint, TorusPoint};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum HypError {
    #[error("bundle iteration did not converge within depth {depth}")]
    NotConverged { depth: usize },
    #[error("neither domination inequality holds (worst ratios {ratio_1:.4}, {ratio_2:.4})")]
    FailNoDomination { ratio_1: f64, ratio_2: f64 },
    #[error("invalid cone parameters: {0}")]
    InvalidCone(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Stopping tolerance of the bundle iterations (radians).
pub const BUNDLE_TOL: f64 = 1e-11;

/// Deepest iteration used by the bundle computations.
pub const BUNDLE_DEPTH_MAX: usize = 400;

/// Full branch enumeration stops at this many branches.
pub const BRANCH_ENUMERATION_CAP: usize = 1 << 14;

/// Seed of the branch sampler.
pub const BRANCH_SEED: u64 = 0x5eed_b7a2;

/// A constant cone field around a splitting `E₁ ⊕ E₂`.
///
/// In frame coordinates `v = v₁e₁ + v₂e₂`, the E₁ cone is `|v₂| ≤ α|v₁|`
/// and the E₂ cone `|v₁| ≤ s·α|v₂|`, with `s = e2_scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConeParams {
    pub e1: Direction,
    pub e2: Direction,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Iterate used in the domination inequalities.
    pub k: u32,
    pub e2_scale: f64,
}

/// Domination iterate used for the g₀ cone.
pub const MANE_ITERATE: u32 = 8;

/// Domination iterate used for the cu cone.
pub const CU_ITERATE: u32 = 4;

/// E₂ aperture of the g₀ cone.
pub const MANE_E2_APERTURE: f64 = 3.0;

impl ConeParams {
    pub fn new(e1: Direction, e2: Direction, alpha: f64, alpha1: f64, alpha2: f64, k: u32) -> Result<Self, HypError> {
        ConeParams { e1, e2, alpha, alpha1, alpha2, k, e2_scale: 1.0 }.checked()
    }

    pub fn with_e2_scale(self, e2_scale: f64) -> Result<Self, HypError> {
        ConeParams { e2_scale, ..self }.checked()
    }

    fn checked(self) -> Result<Self, HypError> {
        if !(0.0 < self.alpha1 && self.alpha1 < self.alpha && self.alpha < self.alpha2 && self.alpha2 < 1.0) {
            return Err(HypError::InvalidCone("need 0 < alpha1 < alpha < alpha2 < 1"));
        }
        if self.k == 0 {
            return Err(HypError::InvalidCone("k must be at least 1"));
        }
        if direction_dist(self.e1, self.e2) < 1e-12 {
            return Err(HypError::InvalidCone("e1 and e2 coincide"));
        }
        if !(self.e2_scale > 0.0 && self.alpha * self.e2_aperture() < 1.0) {
            return Err(HypError::InvalidCone("the two cones overlap"));
        }
        Ok(self)
    }

    /// Cones around the eigen-splitting of A with `α₁ = 0.9α`, `α₂ = 1.1α`.
    pub fn eigen(spec: &SpectralData, alpha: f64, k: u32) -> Result<Self, HypError> {
        ConeParams::new(spec.e_s, spec.e_u, alpha, 0.9 * alpha, 1.1 * alpha, k)
    }

    /// The cone of a validated g₀: E₁ aperture `a = 2C₀(k)` and a wide E₂ cone.
    pub fn for_mane(spec: &SpectralData, cert: &ConeCertificate) -> Result<Self, HypError> {
        let a = cert.aperture;
        ConeParams::eigen(spec, a, MANE_ITERATE)?.with_e2_scale(MANE_E2_APERTURE / a)
    }

    /// The cone of a validated cu model: both apertures equal the
    /// certified unstable aperture.
    pub fn for_cu(spec: &SpectralData, cert: &CuCertificate) -> Result<Self, HypError> {
        ConeParams::eigen(spec, cert.unstable_aperture, CU_ITERATE)
    }

    pub fn e2_aperture(&self) -> f64 {
        self.alpha * self.e2_scale
    }

    pub fn e2_inner(&self) -> f64 {
        self.alpha1 * self.e2_scale
    }

    /// Columns e₁, e₂.
    pub fn frame(&self) -> Mat2 {
        Mat2::from_columns(self.e1.unit(), self.e2.unit())
    }

    fn frame_inv(&self) -> Mat2 {
        self.frame().inverse().expect("cone directions are distinct")
    }

    /// Unit boundary and axis vectors of the E₁ cone.
    fn e1_vectors(&self, a: f64) -> [LiftPoint; 3] {
        let f = self.frame();
        [LiftPoint::new(1.0, a), LiftPoint::new(1.0, -a), LiftPoint::new(1.0, 0.0)].map(|v| f.apply(v).normalized())
    }

    fn e2_vectors(&self, b: f64) -> [LiftPoint; 3] {
        let f = self.frame();
        [LiftPoint::new(b, 1.0), LiftPoint::new(-b, 1.0), LiftPoint::new(0.0, 1.0)].map(|v| f.apply(v).normalized())
    }
}

/// `n × n` grid of the fundamental domain.
pub fn grid_points(n: usize) -> Vec<LiftPoint> {
    let mut out = Vec::with_capacity(n * n);
    for x in crate::util::unit_grid(n) {
        for y in crate::util::unit_grid(n) {
            out.push(LiftPoint::new(x, y));
        }
    }
    out
}

/// `n × n` grid of the eigen-box `|ξ_s| ≤ half_s, |ξ_u| ≤ half_u` around 0.
pub fn eigen_box_points(spec: &SpectralData, half_s: f64, half_u: f64, n: usize) -> Vec<LiftPoint> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let s = half_s * (2.0 * (i as f64 + 0.5) / n as f64 - 1.0);
        for j in 0..n {
            let u = half_u * (2.0 * (j as f64 + 0.5) / n as f64 - 1.0);
            out.push(spec.from_eigen_coords(s, u));
        }
    }
    out
}

/// Angular excess of the cone inclusions for the derivative `j`.
pub fn cone_defect_of(cone: &ConeParams, j: Mat2) -> f64 {
    let f = cone.frame();
    let fi = cone.frame_inv();
    let jc = fi * j * f;
    let Some(jinv) = jc.inverse() else { return core::f64::consts::FRAC_PI_2 };
    let mut worst = 0.0f64;
    // E₁: the a₂-cone at f(x) pulls back into the a-cone at x.
    let b1 = libm::atan(cone.alpha);
    for w in [LiftPoint::new(1.0, cone.alpha2), LiftPoint::new(1.0, -cone.alpha2), LiftPoint::new(1.0, 0.0)] {
        let v = jinv.apply(w);
        worst = worst.max(libm::atan2(v.y.abs(), v.x.abs()) - b1);
    }
    // E₂: the cone maps into the narrower one.
    let beta = cone.e2_aperture();
    let b2 = libm::atan(cone.e2_inner());
    for w in [LiftPoint::new(beta, 1.0), LiftPoint::new(-beta, 1.0), LiftPoint::new(0.0, 1.0)] {
        let v = jc.apply(w);
        worst = worst.max(libm::atan2(v.x.abs(), v.y.abs()) - b2);
    }
    worst.max(0.0)
}

/// Largest inclusion defect over a grid; 0 when both inclusions hold.
pub fn check_cone_invariance<M: Endomorphism + ?Sized>(m: &M, cone: &ConeParams, grid_n: usize) -> f64 {
    check_cone_invariance_at(&Sequential, m, cone, &grid_points(grid_n))
}

pub fn check_cone_invariance_at<E, M>(exec: &E, m: &M, cone: &ConeParams, points: &[LiftPoint]) -> f64
where
    E: Executor,
    M: Endomorphism + ?Sized,
{
    exec.map(points.len(), |i| cone_defect_of(cone, m.deriv(points[i])))
        .into_iter()
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PhClass {
    Sc,
    Cu,
    Anosov,
    Fail,
}

impl PhClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhClass::Sc => "sc",
            PhClass::Cu => "cu",
            PhClass::Anosov => "anosov",
            PhClass::Fail => "fail",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PHCertificate {
    pub model_label: String,
    pub cone: ConeParams,
    pub grid_n: usize,
    pub points: usize,
    pub classification: PhClass,
    pub invariance_defect: f64,
    /// Sup of `|Dfᵏv₁| / min(|Dfᵏv₂|, 1)`.
    pub worst_ratio_1: f64,
    /// Sup of `max(|Dfᵏv₁|, 1) / |Dfᵏv₂|`.
    pub worst_ratio_2: f64,
}

/// The two domination ratios at `p` with the cone's iterate `k`.
///
/// The E₁ vectors are the pull-backs by `Dfᵏ` of the boundary and axis
/// vectors of the E₁ cone at `fᵏ(p)`; the E₂ vectors are those of the E₂
/// cone at `p`.
pub fn domination_ratios_at<M: Endomorphism + ?Sized>(m: &M, cone: &ConeParams, p: LiftPoint) -> (f64, f64) {
    let mut x = p;
    let mut mk = Mat2::IDENTITY;
    for _ in 0..cone.k {
        mk = m.deriv(x) * mk;
        x = m.lift(x).reduced();
    }
    let Some(mk_inv) = mk.inverse() else { return (f64::INFINITY, f64::INFINITY) };
    let mut n1 = 0.0f64;
    for w in cone.e1_vectors(cone.alpha) {
        n1 = n1.max(1.0 / mk_inv.apply(w).norm());
    }
    let mut n2 = f64::INFINITY;
    for v in cone.e2_vectors(cone.e2_aperture()) {
        n2 = n2.min(mk.apply(v).norm());
    }
    (n1 / n2.min(1.0), n1.max(1.0) / n2)
}

pub fn classify_ph<M: Endomorphism + ?Sized>(m: &M, cone: &ConeParams, grid_n: usize) -> Result<PHCertificate, HypError> {
    classify_ph_at(&Sequential, m, cone, &grid_points(grid_n), grid_n)
}

/// [`classify_ph`] over explicit points; `grid_n` is only recorded.
pub fn classify_ph_at<E, M>(
    exec: &E,
    m: &M,
    cone: &ConeParams,
    points: &[LiftPoint],
    grid_n: usize,
) -> Result<PHCertificate, HypError>
where
    E: Executor,
    M: Endomorphism + ?Sized,
{
    let rows = exec.map(points.len(), |i| {
        let p = points[i];
        let d = cone_defect_of(cone, m.deriv(p));
        let (r1, r2) = domination_ratios_at(m, cone, p);
        (d, r1, r2)
    });
    let defect = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let r1 = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let r2 = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let classification = if defect > 0.0 {
        PhClass::Fail
    } else {
        match (r1 < 0.5, r2 < 0.5) {
            (true, true) => PhClass::Anosov,
            (true, false) => PhClass::Sc,
            (false, true) => PhClass::Cu,
            (false, false) => return Err(HypError::FailNoDomination { ratio_1: r1, ratio_2: r2 }),
        }
    };
    Ok(PHCertificate {
        model_label: String::from(m.label()),
        cone: *cone,
        grid_n,
        points: points.len(),
        classification,
        invariance_defect: defect,
        worst_ratio_1: r1,
        worst_ratio_2: r2,
    })
}

/// E¹ at `x`: a boundary vector of the E₁ cone at `fᵈ(x)` pulled back
/// along the orbit, for the first depth `d ≤ depth_max` at which two
/// consecutive depths agree.
pub fn bundle_e1<M: Endomorphism + ?Sized>(m: &M, x: LiftPoint, depth_max: usize) -> Result<Direction, HypError> {
    let spec = &m.linear().spectrum;
    let seed = (spec.unit(Sigma::Stable) + spec.unit(Sigma::Unstable) * 0.5).normalized();
    bundle_e1_seeded(m, x, depth_max, seed)
}

/// [`bundle_e1`] with an explicit seed vector.
pub fn bundle_e1_seeded<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    depth_max: usize,
    seed: LiftPoint,
) -> Result<Direction, HypError> {
    let mut inv = Vec::with_capacity(depth_max);
    let mut p = x;
    let mut prev: Option<Direction> = None;
    for d in 1..=depth_max {
        let j = m.deriv(p).inverse().ok_or(HypError::NotConverged { depth: d })?;
        inv.push(j);
        p = m.lift(p).reduced();
        let mut v = seed;
        for j in inv.iter().rev() {
            v = j.apply(v).normalized();
        }
        let dir = Direction::from_vector(v);
        if let Some(q) = prev {
            if direction_dist(q, dir) < BUNDLE_TOL {
                return Ok(dir);
            }
        }
        prev = Some(dir);
    }
    Err(HypError::NotConverged { depth: depth_max })
}

/// A finite negative orbit: the `j`-th backward step from `x₋ⱼ₊₁` picks
/// the preimage of `x₋ⱼ₊₁ + rep(choices[j])`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackwardBranch {
    pub choices: Vec<usize>,
}

impl BackwardBranch {
    pub fn new(choices: Vec<usize>) -> Self {
        BackwardBranch { choices }
    }

    /// The branch that always takes the zero coset representative.
    pub fn zero(len: usize) -> Self {
        BackwardBranch { choices: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// The reduced points `x₀ = x, x₋₁, …, x₋ₙ`.
    pub fn points<M: Endomorphism + ?Sized>(&self, m: &M, x: LiftPoint) -> Result<Vec<LiftPoint>, ModelError> {
        let lin = m.linear();
        let mut out = Vec::with_capacity(self.choices.len() + 1);
        let mut p = x.reduced();
        out.push(p);
        for &c in &self.choices {
            p = lift_inverse(m, p.shift(lin.cosets.rep(c)))?.reduced();
            out.push(p);
        }
        Ok(out)
    }
}

fn backward_step<M: Endomorphism + ?Sized>(m: &M, p: LiftPoint, choice: usize) -> Result<LiftPoint, ModelError> {
    Ok(lift_inverse(m, p.shift(m.linear().cosets.rep(choice)))?.reduced())
}

/// Pushes `seed` from `chain[last]` to `chain[0]`.
fn push_along<M: Endomorphism + ?Sized>(m: &M, chain: &[LiftPoint], seed: LiftPoint) -> LiftPoint {
    let mut v = seed;
    for p in chain[1..].iter().rev() {
        v = m.deriv(*p).apply(v).normalized();
    }
    v
}

/// E² along the zero branch continuing from `y`, as a unit vector.
fn tail_direction<M: Endomorphism + ?Sized>(m: &M, y: LiftPoint) -> Result<LiftPoint, HypError> {
    let spec = &m.linear().spectrum;
    let (es, eu) = (spec.unit(Sigma::Stable), spec.unit(Sigma::Unstable));
    let seeds = [(eu + es).normalized(), (eu - es).normalized()];
    let mut chain = vec![y.reduced()];
    let mut depth = 8;
    while depth <= BUNDLE_DEPTH_MAX {
        while chain.len() <= depth {
            let last = *chain.last().unwrap();
            chain.push(backward_step(m, last, 0)?);
        }
        let a = push_along(m, &chain, seeds[0]);
        let b = push_along(m, &chain, seeds[1]);
        if direction_dist(Direction::from_vector(a), Direction::from_vector(b)) < BUNDLE_TOL {
            return Ok(a);
        }
        depth *= 2;
    }
    Err(HypError::NotConverged { depth: BUNDLE_DEPTH_MAX })
}

/// E² at `x` for the negative orbit given by `branch`, continued by the
/// zero branch until two cone seeds agree.
pub fn bundle_e2<M: Endomorphism + ?Sized>(m: &M, x: LiftPoint, branch: &BackwardBranch) -> Result<Direction, HypError> {
    let chain = branch.points(m, x)?;
    let tail = tail_direction(m, *chain.last().unwrap())?;
    Ok(Direction::from_vector(push_along(m, &chain, tail)))
}

/// E² along the zero branch (the choice used for leaf integration).
pub fn bundle_e2_default<M: Endomorphism + ?Sized>(m: &M, x: LiftPoint) -> Result<Direction, HypError> {
    Ok(Direction::from_vector(tail_direction(m, x)?))
}

/// Angular diameter of a set of directions.
pub fn angular_diameter(dirs: &[Direction]) -> f64 {
    use core::f64::consts::{FRAC_PI_2, PI};
    if dirs.len() < 2 {
        return 0.0;
    }
    let mut th: Vec<f64> = dirs.iter().map(|d| d.theta()).collect();
    th.sort_by(f64::total_cmp);
    let mut gap = th[0] + PI - th[th.len() - 1];
    for w in th.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    let arc = PI - gap;
    if arc <= FRAC_PI_2 {
        return arc;
    }
    let mut worst = 0.0f64;
    for (i, a) in dirs.iter().enumerate() {
        for b in &dirs[i + 1..] {
            worst = worst.max(direction_dist(*a, *b));
        }
    }
    worst
}

/// `direction_dist` of E² along two branches at `x`.
pub fn branch_pair_spread<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    a: &BackwardBranch,
    b: &BackwardBranch,
) -> Result<f64, HypError> {
    Ok(direction_dist(bundle_e2(m, x, a)?, bundle_e2(m, x, b)?))
}

/// E² directions at `x` over every branch of length `depth`.
fn enumerate_branch_directions<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    depth: usize,
) -> Result<Vec<Direction>, HypError> {
    let mut out = Vec::new();
    // Each node carries the product DF(x₋₁)⋯DF(x₋ⱼ), rescaled.
    fn walk<M: Endomorphism + ?Sized>(
        m: &M,
        p: LiftPoint,
        prod: Mat2,
        left: usize,
        out: &mut Vec<Direction>,
    ) -> Result<(), HypError> {
        if left == 0 {
            let v = prod.apply(tail_direction(m, p)?);
            out.push(Direction::from_vector(v));
            return Ok(());
        }
        for c in 0..m.linear().cosets.len() {
            let q = backward_step(m, p, c)?;
            let next = prod * m.deriv(q);
            let s = next.max_abs();
            walk(m, q, next.scaled(1.0 / s), left - 1, out)?;
        }
        Ok(())
    }
    walk(m, x.reduced(), Mat2::IDENTITY, depth, &mut out)?;
    Ok(out)
}

fn sample_branch_directions<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    depth: usize,
    budget: usize,
) -> Result<Vec<Direction>, HypError> {
    let deg = m.linear().cosets.len();
    let bits = (x.x.to_bits() ^ x.y.to_bits().rotate_left(17)) ^ ((depth as u64) << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(BRANCH_SEED ^ bits);
    let mut out = Vec::with_capacity(budget);
    for i in 0..budget {
        let mut choices = Vec::with_capacity(depth);
        // Stratified on the first step.
        choices.push(i % deg);
        for _ in 1..depth {
            choices.push((rng.next_u64() % deg as u64) as usize);
        }
        out.push(bundle_e2(m, x, &BackwardBranch::new(choices))?);
    }
    Ok(out)
}

/// Angular diameter of `{E²(x, branch)}` over branches of length `depth`:
/// all of them when `degree^depth` fits in both the budget and the
/// enumeration cap, otherwise `branch_budget` sampled ones.
pub fn specialness_spread<M: Endomorphism + ?Sized>(
    m: &M,
    x: TorusPoint,
    depth: usize,
    branch_budget: usize,
) -> Result<f64, HypError> {
    let deg = m.linear().cosets.len();
    let total = libm::pow(deg as f64, depth as f64);
    let limit = branch_budget.min(BRANCH_ENUMERATION_CAP) as f64;
    let dirs = if deg == 1 || total <= limit {
        enumerate_branch_directions(m, x.lift(), depth)?
    } else {
        sample_branch_directions(m, x.lift(), depth, branch_budget.max(2))?
    };
    Ok(angular_diameter(&dirs))
}

/// Max of [`specialness_spread`] over `points`.
pub fn max_specialness_spread<E, M>(
    exec: &E,
    m: &M,
    points: &[TorusPoint],
    depth: usize,
    branch_budget: usize,
) -> Result<f64, HypError>
where
    E: Executor,
    M: Endomorphism + ?Sized,
{
    let rows = exec.map(points.len(), |i| specialness_spread(m, points[i], depth, branch_budget));
    let mut worst = 0.0f64;
    for r in rows {
        worst = worst.max(r?);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Bundle {
    E1,
    E2,
}

/// An arclength-parameterized polyline; `params[i]` is the signed
/// arclength of `points[i]` from the base point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Leaf {
    pub points: Vec<LiftPoint>,
    pub params: Vec<f64>,
    /// Largest angle between a step chord and the field at its midpoint.
    pub max_tangent_error: f64,
}

impl Leaf {
    /// Index of the base point.
    pub fn base_index(&self) -> usize {
        self.params.iter().position(|&t| t == 0.0).unwrap_or(0)
    }
}

fn bundle_vector<M: Endomorphism + ?Sized>(m: &M, which: Bundle, p: LiftPoint) -> Result<LiftPoint, HypError> {
    // Directions are deck-periodic; evaluate at the reduced point.
    let q = p.reduced();
    match which {
        Bundle::E1 => Ok(bundle_e1(m, q, BUNDLE_DEPTH_MAX)?.unit()),
        Bundle::E2 => tail_direction(m, q),
    }
}

fn aligned(v: LiftPoint, with: LiftPoint) -> LiftPoint {
    if v.dot(with) < 0.0 {
        -v
    } else {
        v
    }
}

/// One half of a leaf: RK4 on the direction field, stopping after `len`
/// or when `stop` says so.
fn integrate_half<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    which: Bundle,
    start: LiftPoint,
    len: f64,
    step: f64,
    stop: &dyn Fn(LiftPoint) -> bool,
    tangent_err: &mut f64,
) -> Result<Vec<LiftPoint>, HypError> {
    let mut out = Vec::new();
    let mut p = x;
    let mut dir = start;
    let mut s = 0.0;
    while s < len - 1e-12 && !stop(p) {
        let h = step.min(len - s);
        let k1 = aligned(bundle_vector(m, which, p)?, dir);
        let k2 = aligned(bundle_vector(m, which, p + k1 * (0.5 * h))?, k1);
        let k3 = aligned(bundle_vector(m, which, p + k2 * (0.5 * h))?, k1);
        let k4 = aligned(bundle_vector(m, which, p + k3 * h)?, k1);
        let d = (k1 + k2 * 2.0 + k3 * 2.0 + k4).normalized();
        let q = p + d * h;
        let mid = aligned(bundle_vector(m, which, (p + q) * 0.5)?, d);
        *tangent_err = tangent_err.max(libm::acos(d.dot(mid).clamp(-1.0, 1.0)));
        out.push(q);
        p = q;
        dir = d;
        s += h;
    }
    Ok(out)
}

fn integrate_until<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    which: Bundle,
    half_len: f64,
    step: f64,
    stop: &dyn Fn(LiftPoint) -> bool,
) -> Result<Leaf, HypError> {
    let d0 = bundle_vector(m, which, x)?;
    let mut err = 0.0;
    let fwd = integrate_half(m, x, which, d0, half_len, step, stop, &mut err)?;
    let bwd = integrate_half(m, x, which, -d0, half_len, step, stop, &mut err)?;
    let mut points = Vec::with_capacity(fwd.len() + bwd.len() + 1);
    let mut params = Vec::with_capacity(points.capacity());
    let mut t = 0.0;
    let mut back = Vec::with_capacity(bwd.len());
    let mut prev = x;
    for q in &bwd {
        t -= (*q - prev).norm();
        back.push(t);
        prev = *q;
    }
    for (q, t) in bwd.iter().zip(&back).rev() {
        points.push(*q);
        params.push(*t);
    }
    points.push(x);
    params.push(0.0);
    let mut t = 0.0;
    let mut prev = x;
    for q in fwd {
        t += (q - prev).norm();
        points.push(q);
        params.push(t);
        prev = q;
    }
    Ok(Leaf { points, params, max_tangent_error: err })
}

/// The leaf of `which` through `x`, extended by `arclen / 2` both ways.
pub fn integrate_leaf<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    which: Bundle,
    arclen: f64,
    step: f64,
) -> Result<Leaf, HypError> {
    integrate_until(m, x, which, 0.5 * arclen, step, &|_| false)
}

/// The leaf through `x` up to its first exits from `[−window, window]²`.
pub fn integrate_leaf_in_window<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    which: Bundle,
    window: f64,
    step: f64,
) -> Result<Leaf, HypError> {
    let limit = 8.0 * window;
    integrate_until(m, x, which, limit, step, &|p: LiftPoint| p.max_abs() > window)
}

fn coord(p: LiftPoint) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

/// Sign of the exact orientation, with zero read as positive (a fixed
/// symbolic perturbation, so touching configurations count consistently).
fn orient_sign(a: LiftPoint, b: LiftPoint, c: LiftPoint) -> bool {
    robust::orient2d(coord(a), coord(b), coord(c)) >= 0.0
}

/// Number of crossings between two polylines; identical polylines have none.
pub fn transverse_intersections(a: &[LiftPoint], b: &[LiftPoint]) -> usize {
    if a == b {
        return 0;
    }
    let mut count = 0;
    for sa in a.windows(2) {
        let (p, q) = (sa[0], sa[1]);
        let (ax0, ax1) = (p.x.min(q.x), p.x.max(q.x));
        let (ay0, ay1) = (p.y.min(q.y), p.y.max(q.y));
        for sb in b.windows(2) {
            let (r, u) = (sb[0], sb[1]);
            if r.x.max(u.x) < ax0 || r.x.min(u.x) > ax1 || r.y.max(u.y) < ay0 || r.y.min(u.y) > ay1 {
                continue;
            }
            if orient_sign(p, q, r) != orient_sign(p, q, u) && orient_sign(r, u, p) != orient_sign(r, u, q) {
                count += 1;
            }
        }
    }
    count
}

/// Crossings of the E₁ leaf through `x` with the E₂ leaf through `y`
/// inside `[−window, window]²`.
pub fn global_product_check<M: Endomorphism + ?Sized>(
    m: &M,
    x: LiftPoint,
    y: LiftPoint,
    window: f64,
    step: f64,
) -> Result<usize, HypError> {
    let l1 = integrate_leaf_in_window(m, x, Bundle::E1, window, step)?;
    let l2 = integrate_leaf_in_window(m, y, Bundle::E2, window, step)?;
    let inside = |l: &Leaf| -> Vec<LiftPoint> { clip(&l.points, window) };
    Ok(transverse_intersections(&inside(&l1), &inside(&l2)))
}

/// The longest run of consecutive points around the base that stays in
/// the window, so a crossing outside it is never counted.
fn clip(points: &[LiftPoint], window: f64) -> Vec<LiftPoint> {
    points.iter().copied().filter(|p| p.max_abs() <= window).collect()
}

/// Smallest `C₁` with `arclength ≤ C₁·chord + 1` over pairs of leaf points,
/// never below 1. Uses at most 1500 evenly spaced points.
pub fn quasi_isometry_probe(leaf: &Leaf) -> (f64, f64) {
    let c2 = 1.0;
    let n = leaf.points.len();
    if n < 2 {
        return (1.0, c2);
    }
    let stride = n.div_ceil(1500).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let mut c1 = 1.0f64;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let arc = (leaf.params[j] - leaf.params[i]).abs();
            let chord = (leaf.points[j] - leaf.points[i]).norm();
            if chord > 0.0 {
                c1 = c1.max((arc - c2) / chord);
            } else if arc > c2 {
                c1 = f64::INFINITY;
            }
        }
    }
    (c1, c2)
}

/// The linear model's cones, for oracle comparisons.
pub fn linear_cone(m: &LinearModel, alpha: f64, k: u32) -> Result<ConeParams, HypError> {
    ConeParams::eigen(&m.linear().spectrum, alpha, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::IntMatrix2;

    fn cat() -> LinearModel {
        LinearModel::new(IntMatrix2::new(3, 1, 1, 1)).unwrap()
    }

    #[test]
    fn linear_cones_are_invariant_and_anosov() {
        let m = cat();
        let cone = linear_cone(&m, 0.2, 2).unwrap();
        assert_eq!(check_cone_invariance(&m, &cone, 20), 0.0);
        let c = classify_ph(&m, &cone, 10).unwrap();
        assert_eq!(c.classification, PhClass::Anosov);
    }

    #[test]
    fn linear_bundles_are_eigendirections() {
        let m = cat();
        let s = m.linear().spectrum;
        let p = LiftPoint::new(0.3, 0.1);
        assert!(direction_dist(bundle_e1(&m, p, 60).unwrap(), s.e_s) < 1e-10);
        let e2 = bundle_e2(&m, p, &BackwardBranch::new(vec![1, 0, 1])).unwrap();
        assert!(direction_dist(e2, s.e_u) < 1e-10);
        assert!(specialness_spread(&m, TorusPoint::new(0.3, 0.1), 6, 1 << 14).unwrap() < 1e-10);
    }

    #[test]
    fn crossing_count() {
        let a = [LiftPoint::new(-1.0, 0.0), LiftPoint::new(0.0, 0.0), LiftPoint::new(1.0, 0.0)];
        let b = [LiftPoint::new(0.0, -1.0), LiftPoint::new(0.0, 1.0)];
        // The crossing sits on a vertex of `a` and is still counted once.
        assert_eq!(transverse_intersections(&a, &b), 1);
        assert_eq!(transverse_intersections(&a, &a), 0);
        let c = [LiftPoint::new(0.5, -1.0), LiftPoint::new(0.5, 1.0)];
        assert_eq!(transverse_intersections(&a, &c), 1);
    }

    #[test]
    fn diameter_wraps() {
        let d = [Direction::new(0.05), Direction::new(3.10)];
        assert!((angular_diameter(&d) - (core::f64::consts::PI - 3.05)).abs() < 1e-12);
    }
}
