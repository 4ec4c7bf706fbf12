//! Closed convex state spaces with non-empty interior.

use num_complex::Complex;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{svec, svec_len, sym_eigen, unsvec};
use crate::num::{dot, norm, Real};
use crate::rng::CounterRng;

/// The half-space `{x : normal·x ≤ offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace<T> {
    pub normal: Vec<T>,
    pub offset: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpaceKind<T> {
    /// `ℝ₊^m × ℝ^{p-m}`.
    Canonical { m: usize },
    /// Positive semi-definite `d × d` matrices in scaled half-vectorized coordinates
    /// (off-diagonal entries carry a factor √2, see [`crate::linalg::svec`]).
    PsdCone { d: usize },
    /// `{x : x₁ ≥ ‖x₂..ₚ‖}`.
    Lorentz,
    /// `{x : x₁ ≥ ‖x₂..ₚ‖²}`.
    Parabolic,
    HalfSpaces(Vec<HalfSpace<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T> {
    kind: SpaceKind<T>,
    dim: usize,
    interior_point: Vec<T>,
}

impl<T: Real> StateSpace<T> {
    pub fn canonical(m: usize, p: usize) -> Result<Self> {
        if p == 0 || m > p {
            return Err(Error::InvalidModel(format!("canonical space needs 0 <= m <= p, p >= 1 (m = {m}, p = {p})")));
        }
        let interior_point = (0..p).map(|i| if i < m { T::one() } else { T::zero() }).collect();
        Ok(Self { kind: SpaceKind::Canonical { m }, dim: p, interior_point })
    }

    pub fn psd_cone(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidModel("psd cone needs d >= 1".into()));
        }
        let identity = nalgebra::DMatrix::<T>::identity(d, d);
        Ok(Self { kind: SpaceKind::PsdCone { d }, dim: svec_len(d), interior_point: svec(&identity) })
    }

    pub fn lorentz(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidModel("Lorentz cone needs p >= 2".into()));
        }
        Ok(Self { kind: SpaceKind::Lorentz, dim: p, interior_point: unit(p, 0) })
    }

    pub fn parabolic(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidModel("parabolic space needs p >= 2".into()));
        }
        Ok(Self { kind: SpaceKind::Parabolic, dim: p, interior_point: unit(p, 0) })
    }

    /// Intersection of half-spaces. Rejected when the intersection is empty or has
    /// empty interior.
    pub fn half_spaces(constraints: Vec<HalfSpace<T>>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidModel("half-space intersection needs p >= 1".into()));
        }
        for (j, h) in constraints.iter().enumerate() {
            if h.normal.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: h.normal.len() });
            }
            if !(norm(&h.normal) > T::zero()) || !h.offset.is_finite() {
                return Err(Error::InvalidModel(format!("half-space {j} has a zero or non-finite normal")));
            }
        }
        let interior_point = chebyshev_point(&constraints, p)
            .ok_or_else(|| Error::InvalidModel("half-space intersection has empty interior".into()))?;
        Ok(Self { kind: SpaceKind::HalfSpaces(constraints), dim: p, interior_point })
    }

    pub fn kind(&self) -> &SpaceKind<T> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// A fixed point of the interior.
    pub fn interior_point(&self) -> &[T] {
        &self.interior_point
    }

    /// Whether the space is a convex cone (closed under positive scaling and addition).
    pub fn is_cone(&self) -> bool {
        match &self.kind {
            SpaceKind::Canonical { .. } | SpaceKind::PsdCone { .. } | SpaceKind::Lorentz => true,
            SpaceKind::Parabolic => false,
            SpaceKind::HalfSpaces(hs) => hs.iter().all(|h| h.offset == T::zero()),
        }
    }

    /// Signed interior margin: positive in the interior, zero on the boundary,
    /// negative outside. For cones this is the smallest "eigenvalue" of `x`.
    pub fn margin(&self, x: &[T]) -> T {
        match &self.kind {
            SpaceKind::Canonical { m } => {
                x[..*m].iter().copied().fold(T::infinity(), T::min)
            }
            SpaceKind::PsdCone { d } => {
                let (values, _) = sym_eigen(&unsvec(x, *d));
                values[0]
            }
            SpaceKind::Lorentz => x[0] - norm(&x[1..]),
            SpaceKind::Parabolic => x[0] - dot(&x[1..], &x[1..]),
            SpaceKind::HalfSpaces(hs) => hs
                .iter()
                .map(|h| (h.offset - dot(&h.normal, x)) / norm(&h.normal))
                .fold(T::infinity(), T::min),
        }
    }

    /// Membership with a relative slack for rounding.
    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim && self.margin(x) >= -membership_tol::<T>() * (T::one() + norm(x))
    }

    pub fn is_interior(&self, x: &[T]) -> bool {
        x.len() == self.dim && self.margin(x) > T::zero()
    }

    /// Euclidean projection onto the space.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        match &self.kind {
            SpaceKind::Canonical { m } => x
                .iter()
                .enumerate()
                .map(|(i, v)| if i < *m { v.max(T::zero()) } else { *v })
                .collect(),
            SpaceKind::PsdCone { d } => {
                let (values, vectors) = sym_eigen(&unsvec(x, *d));
                if values[0] >= T::zero() {
                    return x.to_vec();
                }
                let mut out = nalgebra::DMatrix::zeros(*d, *d);
                for (k, lambda) in values.iter().enumerate() {
                    if *lambda > T::zero() {
                        for r in 0..*d {
                            for c in 0..*d {
                                out[(r, c)] += *lambda * vectors[(r, k)] * vectors[(c, k)];
                            }
                        }
                    }
                }
                svec(&out)
            }
            SpaceKind::Lorentz => project_lorentz(x),
            SpaceKind::Parabolic => project_parabolic(x),
            SpaceKind::HalfSpaces(hs) => project_half_spaces(hs, x),
        }
    }

    pub fn distance(&self, x: &[T]) -> T {
        let p = self.project(x);
        x.iter().zip(&p).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>().sqrt()
    }

    /// Whether `sup_{x∈E} Re(u)·x < ∞`.
    pub fn in_u(&self, u: &[Complex<T>]) -> Result<bool> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: u.len() });
        }
        let r: Vec<T> = u.iter().map(|z| z.re).collect();
        let tol = membership_tol::<T>() * (T::one() + norm(&r));
        Ok(match &self.kind {
            SpaceKind::Canonical { m } => r
                .iter()
                .enumerate()
                .all(|(i, v)| if i < *m { *v <= tol } else { v.abs() <= tol }),
            SpaceKind::PsdCone { .. } | SpaceKind::Lorentz => {
                let neg: Vec<T> = r.iter().map(|v| -*v).collect();
                self.contains(&neg)
            }
            // The recession cone is the ray along e₁; any negative slope in x₁
            // dominates the quadratic growth of the free coordinates.
            SpaceKind::Parabolic => r[0] < -tol || r.iter().all(|v| v.abs() <= tol),
            SpaceKind::HalfSpaces(hs) => in_conic_hull(hs, &r),
        })
    }

    /// Random points of the space: roughly half interior, half projected
    /// (typically boundary) points.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<T>> {
        let mut rng = CounterRng::new(seed, 0x5A4D_504C, 0);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            rng.seek(0x5A4D_504C, k as u64);
            let interior = self.sample_interior(&mut rng);
            if k % 2 == 0 {
                out.push(interior);
            } else {
                let kick: Vec<T> = interior
                    .iter()
                    .map(|v| *v + T::lit(3.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)))
                    .collect();
                out.push(self.project(&kick));
            }
        }
        out
    }

    fn sample_interior(&self, rng: &mut CounterRng) -> Vec<T> {
        let p = self.dim;
        let normal = |rng: &mut CounterRng| -> T { T::lit(StandardNormal.sample(rng)) };
        let expo = |rng: &mut CounterRng| -> T { T::lit(Exp1.sample(rng)) };
        match &self.kind {
            SpaceKind::Canonical { m } => (0..p)
                .map(|i| if i < *m { T::lit(2.0) * expo(rng) } else { T::lit(2.0) * normal(rng) })
                .collect(),
            SpaceKind::PsdCone { d } => {
                let b = nalgebra::DMatrix::from_fn(*d, *d, |_, _| normal(rng));
                let mut x = &b * b.transpose() / T::lit(*d as f64);
                for i in 0..*d {
                    x[(i, i)] += T::lit(0.05);
                }
                svec(&x)
            }
            SpaceKind::Lorentz => {
                let rest: Vec<T> = (1..p).map(|_| normal(rng)).collect();
                let mut x = vec![norm(&rest) + expo(rng)];
                x.extend(rest);
                x
            }
            SpaceKind::Parabolic => {
                let rest: Vec<T> = (1..p).map(|_| normal(rng)).collect();
                let mut x = vec![dot(&rest, &rest) + expo(rng)];
                x.extend(rest);
                x
            }
            SpaceKind::HalfSpaces(_) => {
                let c = &self.interior_point;
                let y: Vec<T> = c.iter().map(|v| *v + T::lit(3.0) * normal(rng)).collect();
                let q = self.project(&y);
                let w = T::lit(0.1 + 0.8 * rng.open01());
                c.iter().zip(&q).map(|(a, b)| *a + w * (*b - *a)).collect()
            }
        }
    }
}

pub(crate) fn membership_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::lit(64.0) * T::epsilon())
}

fn unit<T: Real>(p: usize, i: usize) -> Vec<T> {
    (0..p).map(|k| if k == i { T::one() } else { T::zero() }).collect()
}

fn project_lorentz<T: Real>(x: &[T]) -> Vec<T> {
    let t = x[0];
    let r = norm(&x[1..]);
    if r <= t {
        return x.to_vec();
    }
    if r <= -t {
        return vec![T::zero(); x.len()];
    }
    let s = (t + r) / T::lit(2.0);
    let mut out = vec![s];
    out.extend(x[1..].iter().map(|v| s * *v / r));
    out
}

/// Projection onto `{x₁ ≥ ‖y‖²}` for a point `(t, y)` outside: the nearest point is
/// `(r², r·y/‖y‖)` where `r` is the unique positive root of `2r³ + (1-2t)r - ‖y‖`
/// (convex in `r > 0`), found by Newton from the right.
fn project_parabolic<T: Real>(x: &[T]) -> Vec<T> {
    let t = x[0];
    let ny = norm(&x[1..]);
    if t >= ny * ny {
        return x.to_vec();
    }
    if ny == T::zero() {
        // t < 0 on the axis: the vertex is nearest when t <= 1/2.
        let mut out = vec![T::zero(); x.len()];
        out[0] = T::zero();
        return out;
    }
    let two = T::lit(2.0);
    let g = |r: T| two * r * r * r + (T::one() - two * t) * r - ny;
    let mut r = ny;
    for _ in 0..200 {
        let dg = T::lit(6.0) * r * r + T::one() - two * t;
        let next = r - g(r) / dg;
        if (next - r).abs() <= T::epsilon() * (T::one() + r) {
            r = next;
            break;
        }
        r = next;
    }
    let mut out = vec![r * r];
    out.extend(x[1..].iter().map(|v| r * *v / ny));
    out
}

/// Dykstra's alternating projections.
fn project_half_spaces<T: Real>(hs: &[HalfSpace<T>], y: &[T]) -> Vec<T> {
    let p = y.len();
    if hs.iter().all(|h| dot(&h.normal, y) <= h.offset) {
        return y.to_vec();
    }
    let mut x = y.to_vec();
    let mut incr = vec![vec![T::zero(); p]; hs.len()];
    let scale = T::one() + norm(y);
    for _ in 0..100_000 {
        let mut change = T::zero();
        for (h, q) in hs.iter().zip(incr.iter_mut()) {
            let z: Vec<T> = x.iter().zip(q.iter()).map(|(a, b)| *a + *b).collect();
            let viol = dot(&h.normal, &z) - h.offset;
            let next: Vec<T> = if viol > T::zero() {
                let s = viol / dot(&h.normal, &h.normal);
                z.iter().zip(&h.normal).map(|(a, n)| *a - s * *n).collect()
            } else {
                z.clone()
            };
            for i in 0..p {
                change = change.max((next[i] - x[i]).abs());
                q[i] = z[i] - next[i];
            }
            x = next;
        }
        if change <= T::epsilon() * scale {
            break;
        }
    }
    x
}

/// Approximate Chebyshev centre by subgradient ascent on the normalized margin.
fn chebyshev_point<T: Real>(hs: &[HalfSpace<T>], p: usize) -> Option<Vec<T>> {
    let start = project_half_spaces(hs, &vec![T::zero(); p]);
    let margin = |x: &[T]| -> (T, usize) {
        hs.iter()
            .enumerate()
            .map(|(j, h)| ((h.offset - dot(&h.normal, x)) / norm(&h.normal), j))
            .fold((T::infinity(), usize::MAX), |a, b| if b.0 < a.0 { b } else { a })
    };
    if hs.is_empty() {
        return Some(start);
    }
    let mut x = start;
    let mut best = x.clone();
    let mut best_m = margin(&x).0;
    for k in 0..4000 {
        let (m, j) = margin(&x);
        if m > best_m {
            best_m = m;
            best = x.clone();
        }
        let n = &hs[j].normal;
        let step = T::one() / T::lit(((k + 1) as f64).sqrt()) / norm(n);
        for i in 0..p {
            x[i] -= step * n[i];
        }
    }
    (best_m > T::lit(1e-9)).then_some(best)
}

/// Whether `r` lies in the conic hull of the constraint normals, by projected
/// Gauss-Seidel on `min ‖Nλ - r‖², λ ≥ 0`.
fn in_conic_hull<T: Real>(hs: &[HalfSpace<T>], r: &[T]) -> bool {
    let p = r.len();
    let rn = norm(r);
    if rn == T::zero() {
        return true;
    }
    let mut lambda = vec![T::zero(); hs.len()];
    let mut resid: Vec<T> = r.iter().map(|v| -*v).collect();
    for _ in 0..20_000 {
        for (j, h) in hs.iter().enumerate() {
            let nn = dot(&h.normal, &h.normal);
            let next = (lambda[j] - dot(&h.normal, &resid) / nn).max(T::zero());
            let delta = next - lambda[j];
            if delta != T::zero() {
                for i in 0..p {
                    resid[i] += delta * h.normal[i];
                }
                lambda[j] = next;
            }
        }
        if norm(&resid) <= T::lit(1e-10) * (T::one() + rn) {
            return true;
        }
    }
    norm(&resid) <= T::lit(1e-8) * (T::one() + rn)
}
