//! Integer linearizations: hyperbolicity, eigen-splitting, coset
//! representatives of Z²/AZ², linear preimages and their density.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Mat2;
use crate::torus::{frac, project, DeckVector, Direction, LiftPoint, TorusPoint};

/// Row-major integer matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntMatrix2 {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LinearError {
    #[error("matrix is singular")]
    Singular,
    #[error("not hyperbolic: an eigenvalue has modulus 1")]
    NonHyperbolic,
    #[error("expanding: no eigenvalue of modulus less than 1")]
    Expanding,
    #[error("A^n - I is singular")]
    Degenerate,
    #[error("integer overflow in matrix power")]
    Overflow,
    #[error("degree must be at least 2")]
    DegreeTooSmall,
}

impl IntMatrix2 {
    pub const fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        IntMatrix2 { a, b, c, d }
    }

    pub const IDENTITY: IntMatrix2 = IntMatrix2::new(1, 0, 0, 1);

    pub fn det(&self) -> i64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> i64 {
        self.a + self.d
    }

    pub fn to_real(&self) -> Mat2 {
        Mat2::new(self.a as f64, self.b as f64, self.c as f64, self.d as f64)
    }

    pub fn checked_mul(&self, o: &IntMatrix2) -> Option<IntMatrix2> {
        let f = |x: i64, y: i64, z: i64, w: i64| x.checked_mul(y)?.checked_add(z.checked_mul(w)?);
        Some(IntMatrix2::new(
            f(self.a, o.a, self.b, o.c)?,
            f(self.a, o.b, self.b, o.d)?,
            f(self.c, o.a, self.d, o.c)?,
            f(self.c, o.b, self.d, o.d)?,
        ))
    }

    pub fn checked_pow(&self, n: u32) -> Option<IntMatrix2> {
        let mut r = IntMatrix2::IDENTITY;
        for _ in 0..n {
            r = r.checked_mul(self)?;
        }
        Some(r)
    }

    pub fn apply(&self, n: DeckVector) -> DeckVector {
        DeckVector::new(self.a * n.n1 + self.b * n.n2, self.c * n.n1 + self.d * n.n2)
    }

    pub fn apply_wide(&self, n: (i128, i128)) -> (i128, i128) {
        (
            self.a as i128 * n.0 + self.b as i128 * n.1,
            self.c as i128 * n.0 + self.d as i128 * n.1,
        )
    }

    pub fn apply_real(&self, p: LiftPoint) -> LiftPoint {
        LiftPoint::new(
            self.a as f64 * p.x + self.b as f64 * p.y,
            self.c as f64 * p.x + self.d as f64 * p.y,
        )
    }

    /// Adjugate, so that `self · adj = det · I`.
    pub fn adjugate(&self) -> IntMatrix2 {
        IntMatrix2::new(self.d, -self.b, -self.c, self.a)
    }
}

/// Which eigen-line of the linearization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Sigma {
    Stable,
    Unstable,
}

/// Eigen-data of a hyperbolic integer matrix with one contracting and one
/// expanding direction.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralData {
    pub matrix: IntMatrix2,
    pub mu_s: f64,
    pub mu_u: f64,
    pub e_s: Direction,
    pub e_u: Direction,
    pub det: i64,
    pub degree: u64,
    /// Columns are the normalized eigenvectors (e_s, e_u).
    pub basis: Mat2,
    pub basis_inv: Mat2,
}

impl SpectralData {
    pub fn unit(&self, sigma: Sigma) -> LiftPoint {
        match sigma {
            Sigma::Stable => LiftPoint::new(self.basis.a, self.basis.c),
            Sigma::Unstable => LiftPoint::new(self.basis.b, self.basis.d),
        }
    }

    pub fn eigenvalue(&self, sigma: Sigma) -> f64 {
        match sigma {
            Sigma::Stable => self.mu_s,
            Sigma::Unstable => self.mu_u,
        }
    }

    /// Coordinates of `v` in the (e_s, e_u) frame.
    pub fn eigen_coords(&self, v: LiftPoint) -> (f64, f64) {
        let w = self.basis_inv.apply(v);
        (w.x, w.y)
    }

    pub fn from_eigen_coords(&self, s: f64, u: f64) -> LiftPoint {
        self.basis.apply(LiftPoint::new(s, u))
    }
}

fn eigenvector(m: &IntMatrix2, lambda: f64) -> LiftPoint {
    let v1 = LiftPoint::new(m.b as f64, lambda - m.a as f64);
    let v2 = LiftPoint::new(lambda - m.d as f64, m.c as f64);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    let v = v.normalized();
    if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
        -v
    } else {
        v
    }
}

/// Spectral classification of `a`.
pub fn classify(a: IntMatrix2) -> Result<SpectralData, LinearError> {
    let det = a.det();
    if det == 0 {
        return Err(LinearError::Singular);
    }
    let t = a.trace() as i128;
    let det_w = det as i128;
    // Characteristic polynomial at ±1.
    let p_plus = 1 - t + det_w;
    let p_minus = 1 + t + det_w;
    if p_plus == 0 || p_minus == 0 {
        return Err(LinearError::NonHyperbolic);
    }
    let disc = t * t - 4 * det_w;
    if disc < 0 {
        // Complex pair of modulus sqrt(det).
        return Err(if det == 1 { LinearError::NonHyperbolic } else { LinearError::Expanding });
    }
    // Real roots, neither ±1: exactly one lies in (−1, 1) iff p(1)·p(−1) < 0.
    if (p_plus < 0) == (p_minus < 0) {
        return Err(LinearError::Expanding);
    }
    let (mu_s, mu_u) = a.to_real().real_eigenvalues().ok_or(LinearError::Expanding)?;
    let vs = eigenvector(&a, mu_s);
    let vu = eigenvector(&a, mu_u);
    let basis = Mat2::from_columns(vs, vu);
    let basis_inv = basis.inverse().ok_or(LinearError::NonHyperbolic)?;
    Ok(SpectralData {
        matrix: a,
        mu_s,
        mu_u,
        e_s: Direction::from_vector(vs),
        e_u: Direction::from_vector(vu),
        det,
        degree: det.unsigned_abs(),
        basis,
        basis_inv,
    })
}

/// `|det(Aⁿ − I)|`, the number of fixed points of Aⁿ on T².
pub fn fixed_point_count(a: IntMatrix2, n: u32) -> Result<u64, LinearError> {
    let p = a.checked_pow(n).ok_or(LinearError::Overflow)?;
    let m = IntMatrix2::new(p.a - 1, p.b, p.c, p.d - 1);
    let det = m.a as i128 * m.d as i128 - m.b as i128 * m.c as i128;
    if det == 0 {
        return Err(LinearError::Degenerate);
    }
    Ok(det.unsigned_abs() as u64)
}

type W2 = [[i128; 2]; 2];

fn wmul(x: &W2, y: &W2) -> W2 {
    let mut r = [[0i128; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    r
}

/// Smith normal form `U · M · V = diag(d1, d2)` with `d1 | d2`, `d1, d2 > 0`
/// and `U`, `V` unimodular.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Smith {
    pub u: [[i128; 2]; 2],
    pub v: [[i128; 2]; 2],
    pub d1: i128,
    pub d2: i128,
}

pub fn smith_normal_form(m: [[i128; 2]; 2]) -> Smith {
    let mut s = m;
    let mut u: W2 = [[1, 0], [0, 1]];
    let mut v: W2 = [[1, 0], [0, 1]];
    loop {
        // Move a smallest nonzero entry to (0,0).
        let mut best: Option<(usize, usize)> = None;
        for i in 0..2 {
            for j in 0..2 {
                if s[i][j] != 0 && best.map_or(true, |(bi, bj)| s[i][j].abs() < s[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((bi, bj)) = best else { break };
        if bi == 1 {
            s.swap(0, 1);
            u.swap(0, 1);
        }
        if bj == 1 {
            for row in s.iter_mut().chain(v.iter_mut()) {
                row.swap(0, 1);
            }
        }
        let p = s[0][0];
        // Clear column 0 below the pivot.
        let q = s[1][0].div_euclid(p);
        for j in 0..2 {
            s[1][j] -= q * s[0][j];
            u[1][j] -= q * u[0][j];
        }
        // Clear row 0 right of the pivot.
        let q = s[0][1].div_euclid(p);
        for i in 0..2 {
            s[i][1] -= q * s[i][0];
            v[i][1] -= q * v[i][0];
        }
        if s[1][0] != 0 || s[0][1] != 0 {
            continue;
        }
        if s[1][1] % s[0][0] != 0 {
            // Fold row 1 into row 0 to restore divisibility.
            for j in 0..2 {
                s[0][j] += s[1][j];
                u[0][j] += u[1][j];
            }
            continue;
        }
        break;
    }
    for i in 0..2 {
        if s[i][i] < 0 {
            s[i][i] = -s[i][i];
            for e in &mut u[i] {
                *e = -*e;
            }
        }
    }
    Smith { u, v, d1: s[0][0], d2: s[1][1] }
}

/// Canonical coset representatives of Z²/MZ².
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CosetReps {
    u: W2,
    u_inv: W2,
    d1: i128,
    d2: i128,
}

impl CosetReps {
    pub fn new(m: &IntMatrix2) -> Result<Self, LinearError> {
        Self::from_wide([[m.a as i128, m.b as i128], [m.c as i128, m.d as i128]])
    }

    pub fn from_wide(m: W2) -> Result<Self, LinearError> {
        if m[0][0] * m[1][1] - m[0][1] * m[1][0] == 0 {
            return Err(LinearError::Singular);
        }
        let s = smith_normal_form(m);
        let u = s.u;
        let du = u[0][0] * u[1][1] - u[0][1] * u[1][0];
        let u_inv = [[u[1][1] * du, -u[0][1] * du], [-u[1][0] * du, u[0][0] * du]];
        debug_assert_eq!(wmul(&u, &u_inv), [[1, 0], [0, 1]]);
        Ok(CosetReps { u, u_inv, d1: s.d1, d2: s.d2 })
    }

    pub fn len(&self) -> usize {
        (self.d1 * self.d2) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `i`-th representative; index 0 is the zero vector.
    pub fn rep_wide(&self, i: usize) -> (i128, i128) {
        let i = i as i128;
        let (w1, w2) = (i / self.d2, i % self.d2);
        (
            self.u_inv[0][0] * w1 + self.u_inv[0][1] * w2,
            self.u_inv[1][0] * w1 + self.u_inv[1][1] * w2,
        )
    }

    pub fn rep(&self, i: usize) -> DeckVector {
        let (a, b) = self.rep_wide(i);
        DeckVector::new(a as i64, b as i64)
    }

    pub fn reps(&self) -> Vec<DeckVector> {
        (0..self.len()).map(|i| self.rep(i)).collect()
    }

    /// Index of the coset containing `m`.
    pub fn index_of(&self, m: (i128, i128)) -> usize {
        let w1 = (self.u[0][0] * m.0 + self.u[0][1] * m.1).rem_euclid(self.d1);
        let w2 = (self.u[1][0] * m.0 + self.u[1][1] * m.1).rem_euclid(self.d2);
        (w1 * self.d2 + w2) as usize
    }

    /// The canonical representative of the coset of `m`.
    pub fn canonical(&self, m: (i128, i128)) -> (i128, i128) {
        self.rep_wide(self.index_of(m))
    }
}

/// All `y` with `Aᵏ y ≡ x mod Z²`, one per coset of Z²/AᵏZ².
pub fn torus_preimages_linear(a: IntMatrix2, x: TorusPoint, k: u32) -> Result<Vec<TorusPoint>, LinearError> {
    if k == 0 {
        return Ok(vec![x]);
    }
    let m = a.checked_pow(k).ok_or(LinearError::Overflow)?;
    let reps = CosetReps::new(&m)?;
    let det = m.det() as i128;
    let adj = m.adjugate();
    // Aᵏ⁻¹(x + n) = adj·n/det + adj·x/det; the integer part is split off exactly.
    let base = adj.apply_real(x.lift()) * (1.0 / det as f64);
    let mut out = Vec::with_capacity(reps.len());
    for i in 0..reps.len() {
        let (p, q) = adj.apply_wide(reps.rep_wide(i));
        let fx = p.rem_euclid(det.abs()) as f64 / det.abs() as f64 * det.signum() as f64;
        let fy = q.rem_euclid(det.abs()) as f64 / det.abs() as f64 * det.signum() as f64;
        out.push(TorusPoint::new(frac(fx) + base.x, frac(fy) + base.y));
    }
    Ok(out)
}

/// Nearest-point queries against a finite subset of T², bucketed by cell.
pub struct TorusPointIndex {
    cells: usize,
    buckets: Vec<Vec<TorusPoint>>,
}

impl TorusPointIndex {
    pub fn new(points: &[TorusPoint]) -> Self {
        let cells = (libm::sqrt(points.len() as f64) as usize).clamp(1, 1024);
        let mut buckets = vec![Vec::new(); cells * cells];
        for p in points {
            let (i, j) = Self::cell_of(cells, *p);
            buckets[i * cells + j].push(*p);
        }
        TorusPointIndex { cells, buckets }
    }

    fn cell_of(cells: usize, p: TorusPoint) -> (usize, usize) {
        let c = |v: f64| ((v * cells as f64) as usize).min(cells - 1);
        (c(p.x), c(p.y))
    }

    /// Distance from `q` to the nearest indexed point.
    pub fn nearest_dist(&self, q: TorusPoint) -> f64 {
        let n = self.cells as i64;
        let (ci, cj) = Self::cell_of(self.cells, q);
        let h = 1.0 / self.cells as f64;
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            for di in -ring..=ring {
                for dj in -ring..=ring {
                    if di.abs() != ring && dj.abs() != ring {
                        continue;
                    }
                    let i = (ci as i64 + di).rem_euclid(n) as usize;
                    let j = (cj as i64 + dj).rem_euclid(n) as usize;
                    for p in &self.buckets[i * self.cells + j] {
                        best = best.min(crate::torus::torus_dist(*p, q));
                    }
                }
            }
            // Anything outside the searched rings is at least ring·h away.
            if best <= ring as f64 * h || 2 * ring + 1 >= n {
                return best;
            }
            ring += 1;
        }
    }
}

/// Covering radius of the k-preimage sets of `x`, measured on a grid.
pub fn preimage_density(
    a: IntMatrix2,
    x: TorusPoint,
    k_max: u32,
    grid_n: usize,
) -> Result<Vec<(u32, f64)>, LinearError> {
    if a.det().abs() < 2 {
        return Err(LinearError::DegreeTooSmall);
    }
    let mut out = Vec::new();
    for k in 0..=k_max {
        let pts = torus_preimages_linear(a, x, k)?;
        let index = TorusPointIndex::new(&pts);
        let mut eps = 0.0f64;
        for gx in crate::util::unit_grid(grid_n) {
            for gy in crate::util::unit_grid(grid_n) {
                eps = eps.max(index.nearest_dist(TorusPoint::new(gx, gy)));
            }
        }
        out.push((k, eps));
    }
    Ok(out)
}

/// The point at signed arclength `t` along the linear σ-leaf through `x`.
pub fn linear_leaf(spec: &SpectralData, x: LiftPoint, sigma: Sigma, t: f64) -> LiftPoint {
    x + spec.unit(sigma) * t
}

/// Largest distance from a grid of `[−window, window]²` to the union of the
/// σ-leaves through `x + Aᵏm`, `|m|∞ ≤ budget`.
pub fn leaf_density_probe(
    spec: &SpectralData,
    x: LiftPoint,
    sigma: Sigma,
    k: u32,
    window: f64,
    grid_n: usize,
    budget: i64,
) -> Result<f64, LinearError> {
    let ak = spec.matrix.checked_pow(k).ok_or(LinearError::Overflow)?;
    let e = spec.unit(sigma);
    // A leaf is determined by its offset cross(x + n, e) across the foliation.
    let mut offsets = Vec::new();
    for m1 in -budget..=budget {
        for m2 in -budget..=budget {
            let n = ak.apply(DeckVector::new(m1, m2));
            offsets.push((x + n.as_point()).cross(e));
        }
    }
    offsets.sort_by(|a, b| a.total_cmp(b));
    let nearest = |c: f64| {
        let i = offsets.partition_point(|&o| o < c);
        let mut d = f64::INFINITY;
        if i < offsets.len() {
            d = d.min((offsets[i] - c).abs());
        }
        if i > 0 {
            d = d.min((offsets[i - 1] - c).abs());
        }
        d
    };
    let steps = grid_n.max(2) - 1;
    let mut worst = 0.0f64;
    for i in 0..=steps {
        for j in 0..=steps {
            let g = LiftPoint::new(
                -window + 2.0 * window * i as f64 / steps as f64,
                -window + 2.0 * window * j as f64 / steps as f64,
            );
            worst = worst.max(nearest(g.cross(e)));
        }
    }
    Ok(worst)
}

/// Torus image of `x` under the linear map.
pub fn linear_image(a: IntMatrix2, x: TorusPoint) -> TorusPoint {
    project(a.apply_real(x.lift()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::torus_dist;
    use approx::assert_abs_diff_eq;

    const A: IntMatrix2 = IntMatrix2::new(3, 1, 1, 1);

    #[test]
    fn classify_cat_like() {
        let s = classify(A).unwrap();
        let r2 = core::f64::consts::SQRT_2;
        assert_abs_diff_eq!(s.mu_s, 2.0 - r2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.mu_u, 2.0 + r2, epsilon = 1e-15);
        assert_eq!(s.det, 2);
        assert_eq!(s.degree, 2);
        let eu = s.unit(Sigma::Unstable);
        assert_abs_diff_eq!(eu.y / eu.x, r2 - 1.0, epsilon = 1e-15);
        let es = s.unit(Sigma::Stable);
        assert_abs_diff_eq!(es.y / es.x, -r2 - 1.0, epsilon = 1e-14);
        assert!(es.x > 0.0 && eu.x > 0.0);
    }

    #[test]
    fn classify_rejections() {
        assert_eq!(classify(IntMatrix2::new(1, 1, 0, 1)), Err(LinearError::NonHyperbolic));
        assert_eq!(classify(IntMatrix2::new(2, 0, 0, 2)), Err(LinearError::Expanding));
        assert_eq!(classify(IntMatrix2::new(0, -1, 1, 0)), Err(LinearError::NonHyperbolic));
        assert_eq!(classify(IntMatrix2::new(1, -1, 1, 1)), Err(LinearError::Expanding));
        assert_eq!(classify(IntMatrix2::new(1, 2, 2, 4)), Err(LinearError::Singular));
        assert!(classify(IntMatrix2::new(2, 1, 1, 1)).is_ok());
        assert!(classify(IntMatrix2::new(-3, 1, 1, -1)).is_ok());
    }

    #[test]
    fn fixed_points() {
        assert_eq!(fixed_point_count(A, 1), Ok(1));
        assert_eq!(fixed_point_count(A, 2), Ok(7));
        assert_eq!(fixed_point_count(A, 3), Ok(31));
        assert_eq!(fixed_point_count(A, 0), Err(LinearError::Degenerate));
    }

    #[test]
    fn smith_forms() {
        let s = smith_normal_form([[3, 1], [1, 1]]);
        assert_eq!((s.d1, s.d2), (1, 2));
        let s = smith_normal_form([[2, 0], [0, 2]]);
        assert_eq!((s.d1, s.d2), (2, 2));
        let s = smith_normal_form([[4, 6], [6, 8]]);
        assert_eq!((s.d1, s.d2), (2, 2));
        let s = smith_normal_form([[0, 3], [5, 0]]);
        assert_eq!((s.d1, s.d2), (1, 15));
    }

    #[test]
    fn preimages_examples() {
        let p = torus_preimages_linear(A, TorusPoint::new(0.0, 0.0), 1).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().any(|q| torus_dist(*q, TorusPoint::new(0.0, 0.0)) < 1e-15));
        assert!(p.iter().any(|q| torus_dist(*q, TorusPoint::new(0.5, 0.5)) < 1e-15));
        let p2 = torus_preimages_linear(A, TorusPoint::new(0.0, 0.0), 2).unwrap();
        assert_eq!(p2.len(), 4);
        let one = torus_preimages_linear(IntMatrix2::new(2, 1, 1, 1), TorusPoint::new(0.3, 0.6), 1).unwrap();
        assert_eq!(one.len(), 1);
        let back = linear_image(IntMatrix2::new(2, 1, 1, 1), one[0]);
        assert!(torus_dist(back, TorusPoint::new(0.3, 0.6)) < 1e-14);
    }

    #[test]
    fn density_first_steps() {
        let d = preimage_density(A, TorusPoint::new(0.0, 0.0), 1, 100).unwrap();
        assert_abs_diff_eq!(d[0].1, core::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert!(d[1].1 < d[0].1);
    }

    #[test]
    fn leaf_and_probe() {
        let s = classify(A).unwrap();
        let x = LiftPoint::new(0.2, -0.1);
        assert_eq!(linear_leaf(&s, x, Sigma::Unstable, 0.0), x);
        let p = linear_leaf(&s, LiftPoint::ORIGIN, Sigma::Unstable, 1.0);
        assert_abs_diff_eq!(p.x, 0.92388, epsilon = 1e-5);
        assert_abs_diff_eq!(p.y, 0.38268, epsilon = 1e-5);
        let single = leaf_density_probe(&s, LiftPoint::ORIGIN, Sigma::Unstable, 0, 1.0, 21, 0).unwrap();
        assert!(single > 0.5);
        let dense = leaf_density_probe(&s, LiftPoint::ORIGIN, Sigma::Unstable, 0, 1.0, 21, 6).unwrap();
        assert!(dense < 0.51 && dense <= single);
    }
}
