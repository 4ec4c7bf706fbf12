//! Self-dual cone state spaces: the order `x ⪯ y ⇔ y - x ∈ E`, boundary
//! functions, and checks of how Riccati flows interact with the cone.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{det, min_eigenvalue, svec_len, unsvec};
use crate::model::{AffineModel, JumpMeasure, SpaceKind, StateSpace};
use crate::num::{cdot_real, norm, Real};
use crate::riccati::{solve_riccati, RiccatiSolution, SolverConfig, Verdict};

type C<T> = Complex<T>;

/// A cone that is its own dual under the Euclidean inner product of its
/// coordinates. `VechPsd` uses the scaled half-vectorization, so the Euclidean
/// product of coordinates is the trace product of the matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfDualCone {
    Orthant(usize),
    VechPsd(usize),
    Lorentz(usize),
}

impl SelfDualCone {
    pub fn from_space<T: Real>(space: &StateSpace<T>) -> Result<Self> {
        let p = space.dim();
        match space.kind() {
            SpaceKind::Canonical { m } if *m == p => Ok(Self::Orthant(p)),
            SpaceKind::PsdCone { d } => Ok(Self::VechPsd(*d)),
            SpaceKind::Lorentz => Ok(Self::Lorentz(p)),
            _ => Err(Error::UnsupportedSpace("state space is not a self-dual cone".into())),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Self::Orthant(p) | Self::Lorentz(p) => p,
            Self::VechPsd(d) => svec_len(d),
        }
    }

    pub fn inner<T: Real>(&self, x: &[T], y: &[T]) -> T {
        x.iter().zip(y).map(|(a, b)| *a * *b).sum()
    }

    /// Signed distance-like margin: positive inside, zero on the boundary.
    pub fn margin<T: Real>(&self, x: &[T]) -> T {
        match *self {
            Self::Orthant(_) => x.iter().copied().fold(T::infinity(), T::min),
            Self::VechPsd(d) => min_eigenvalue(&unsvec(x, d)),
            Self::Lorentz(_) => (x[0] - norm(&x[1..])) / T::SQRT_2(),
        }
    }

    pub fn contains<T: Real>(&self, x: &[T], tol: T) -> bool {
        self.margin(x) >= -tol
    }

    pub fn is_interior<T: Real>(&self, x: &[T]) -> bool {
        self.margin(x) > T::zero()
    }

    /// Euclidean distance to the cone.
    pub fn distance<T: Real>(&self, x: &[T]) -> T {
        let space = self.space::<T>();
        space.distance(x)
    }

    fn space<T: Real>(&self) -> StateSpace<T> {
        match *self {
            Self::Orthant(p) => StateSpace::canonical(p, p),
            Self::VechPsd(d) => StateSpace::psd_cone(d),
            Self::Lorentz(p) => StateSpace::lorentz(p),
        }
        .expect("cone dimensions are valid")
    }

    /// `Φ`: product of coordinates, determinant, or `x₁² - Σ_{i≥2} xᵢ²`.
    pub fn boundary_phi<T: Real>(&self, x: &[T]) -> T {
        match *self {
            Self::Orthant(_) => x.iter().copied().fold(T::one(), |a, b| a * b),
            Self::VechPsd(d) => det(&unsvec(x, d)),
            Self::Lorentz(_) => x[0] * x[0] - x[1..].iter().map(|v| *v * *v).sum::<T>(),
        }
    }

    /// Degree of homogeneity of [`Self::boundary_phi`].
    pub fn phi_degree(&self) -> usize {
        match *self {
            Self::Orthant(p) => p,
            Self::VechPsd(d) => d,
            Self::Lorentz(_) => 2,
        }
    }
}

/// `u ⪯ v`, i.e. `v - u ∈ E` up to the membership tolerance of the space.
pub fn cone_leq<T: Real>(cone: &SelfDualCone, u: &[T], v: &[T]) -> bool {
    let d: Vec<T> = v.iter().zip(u).map(|(a, b)| *a - *b).collect();
    let tol = T::lit(1e-12).max(T::lit(64.0) * T::epsilon()) * (T::one() + norm(&d));
    cone.contains(&d, tol)
}

pub fn boundary_phi<T: Real>(cone: &SelfDualCone, x: &[T]) -> T {
    cone.boundary_phi(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport<T> {
    /// `min_k ψ₀(t_k,v) - ψ₀(t_k,u)` over the grid.
    pub psi0_margin: T,
    /// `max_k dist(ψ(t_k,v) - ψ(t_k,u), E)`.
    pub cone_slack: T,
    /// Largest allowance used on the grid.
    pub tol: T,
    pub pass: bool,
}

fn neg<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|v| -*v).collect()
}

fn solved<T: Real>(model: &AffineModel<T>, u: &[C<T>], t: T, cfg: &SolverConfig<T>) -> Result<RiccatiSolution<T>> {
    let sol = solve_riccati(model, u, t, cfg)?;
    if let Verdict::Exploded { t_lo, t_hi } = sol.verdict() {
        return Err(Error::ExplosionBeforeHorizon { t_lo: t_lo.as_f64(), t_hi: t_hi.as_f64(), horizon: t.as_f64() });
    }
    Ok(sol)
}

fn grid<T: Real>(t: T, n: usize) -> impl Iterator<Item = T> {
    let n = n.max(1);
    // The last node is `t` itself; `t·n/n` can round past the solved range.
    (0..=n).map(move |k| if k == n { t } else { t * T::from_usize(k).expect("small") / T::from_usize(n).expect("small") })
}

/// For `u ⪯ v` in `-E`: `ψ₀(s,u) ≤ ψ₀(s,v)` and `ψ(s,u) ⪯ ψ(s,v)` on `n_grid + 1`
/// equally spaced times in `[0, t]`, with slack `100 · rel_tol · max(1, ‖ψ‖)`.
pub fn monotonicity_check<T: Real>(
    model: &AffineModel<T>,
    u: &[T],
    v: &[T],
    t: T,
    n_grid: usize,
    cfg: &SolverConfig<T>,
) -> Result<MonotonicityReport<T>> {
    let cone = SelfDualCone::from_space(model.space())?;
    let tol0 = T::lit(1e-12).max(T::lit(64.0) * T::epsilon());
    if !(cone.contains(&neg(u), tol0) && cone.contains(&neg(v), tol0) && cone_leq(&cone, u, v)) {
        return Err(Error::InvalidConfig("monotonicity check needs u ⪯ v in -E".into()));
    }
    let cu: Vec<C<T>> = u.iter().map(|x| C::new(*x, T::zero())).collect();
    let cv: Vec<C<T>> = v.iter().map(|x| C::new(*x, T::zero())).collect();
    let (su, sv) = (solved(model, &cu, t, cfg)?, solved(model, &cv, t, cfg)?);
    let mut report = MonotonicityReport { psi0_margin: T::infinity(), cone_slack: T::zero(), tol: T::zero(), pass: true };
    for s in grid(t, n_grid) {
        let (a0, a) = su.eval(s).expect("inside solved range");
        let (b0, b) = sv.eval(s).expect("inside solved range");
        let a: Vec<T> = a.iter().map(|z| z.re).collect();
        let b: Vec<T> = b.iter().map(|z| z.re).collect();
        let tol = T::lit(100.0) * cfg.rel_tol * T::one().max(norm(&a)).max(norm(&b)).max(a0.re.abs());
        let diff: Vec<T> = b.iter().zip(&a).map(|(x, y)| *x - *y).collect();
        let margin0 = b0.re - a0.re;
        let slack = cone.distance(&diff);
        report.psi0_margin = report.psi0_margin.min(margin0);
        report.cone_slack = report.cone_slack.max(slack);
        report.tol = report.tol.max(tol);
        if margin0 < -tol || slack > tol {
            report.pass = false;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorReport<T> {
    /// `min_k margin(-Re ψ(t_k,u))`; positive means strictly interior.
    pub min_margin: T,
    pub exploded: bool,
    pub pass: bool,
}

/// For `Re u ∈ -int(E)`: no explosion up to `t`, and `Re ψ(s,u) ∈ -int(E)` on the grid.
pub fn interior_preservation_check<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    t: T,
    n_grid: usize,
    cfg: &SolverConfig<T>,
) -> Result<InteriorReport<T>> {
    let cone = SelfDualCone::from_space(model.space())?;
    let re: Vec<T> = u.iter().map(|z| -z.re).collect();
    if !cone.is_interior(&re) {
        return Err(Error::InvalidConfig("interior preservation needs Re u in -int(E)".into()));
    }
    let sol = solve_riccati(model, u, t, cfg)?;
    if !sol.is_solved() {
        return Ok(InteriorReport { min_margin: T::neg_infinity(), exploded: true, pass: false });
    }
    let mut min_margin = T::infinity();
    for s in grid(t, n_grid) {
        let (_, psi) = sol.eval(s).expect("inside solved range");
        let r: Vec<T> = psi.iter().map(|z| -z.re).collect();
        min_margin = min_margin.min(cone.margin(&r));
    }
    Ok(InteriorReport { min_margin, exploded: false, pass: min_margin > T::zero() })
}

const LATTICE_TOL: f64 = 1e-9;

/// Whether `(K¹(L_u), .., Kᵖ(L_u)) ≻ 0` with `L_u = {z : uᵀz ∉ 2πℤ}`; atoms
/// within `1e-9` of the lattice count as on it.
pub fn regularity_lu_check<T: Real>(model: &AffineModel<T>, u: &[T]) -> Result<bool> {
    let cone = SelfDualCone::from_space(model.space())?;
    if u.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: u.len() });
    }
    let two_pi = T::TAU();
    let cu: Vec<C<T>> = u.iter().map(|x| C::new(*x, T::zero())).collect();
    let mut masses = Vec::with_capacity(model.dim());
    for k in &model.jumps()[1..] {
        let JumpMeasure::FiniteAtomic(atoms) = k else {
            return Err(Error::UnsupportedFamily("regularity check needs finite atomic measures".into()));
        };
        let mass = atoms
            .iter()
            .filter(|a| {
                let w = cdot_real(&cu, &a.z).re;
                let k = (w / two_pi).round();
                (w - k * two_pi).abs() > T::lit(LATTICE_TOL)
            })
            .map(|a| a.weight)
            .sum::<T>();
        masses.push(mass);
    }
    Ok(cone.is_interior(&masses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svec;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn cir(jumps: Vec<JumpMeasure<f64>>) -> AffineModel<f64> {
        AffineModel::new(vec![1.0], m1(0.0), vec![m1(0.0), m1(2.0)], jumps, StateSpace::canonical(1, 1).unwrap()).unwrap()
    }

    #[test]
    fn cone_leq_examples() {
        let o = SelfDualCone::Orthant(2);
        assert!(cone_leq(&o, &[1.0, 1.0], &[1.0, 1.0]));
        assert!(cone_leq(&o, &[1.0, 1.0], &[2.0, 1.0]));
        assert!(!cone_leq(&o, &[1.0, 1.0], &[0.0, 3.0]));
        assert!(cone_leq(&SelfDualCone::Lorentz(3), &[0.0; 3], &[2.0, 1.0, 1.0]));
    }

    #[test]
    fn boundary_phi_examples() {
        assert_eq!(boundary_phi(&SelfDualCone::Orthant(3), &[1.0, 2.0, 3.0]), 6.0);
        let id = svec(&DMatrix::<f64>::identity(2, 2));
        assert!((boundary_phi(&SelfDualCone::VechPsd(2), &id) - 1.0).abs() < 1e-15);
        assert_eq!(boundary_phi(&SelfDualCone::Lorentz(3), &[2.0, 1.0, 1.0]), 2.0);
    }

    #[test]
    fn only_self_dual_spaces_convert() {
        assert_eq!(SelfDualCone::from_space(&StateSpace::<f64>::canonical(2, 2).unwrap()).unwrap(), SelfDualCone::Orthant(2));
        assert!(SelfDualCone::from_space(&StateSpace::<f64>::canonical(1, 2).unwrap()).is_err());
        assert!(SelfDualCone::from_space(&StateSpace::<f64>::parabolic(2).unwrap()).is_err());
    }

    #[test]
    fn monotonicity_examples() {
        let cfg = SolverConfig::default();
        let m = cir(vec![]);
        let same = monotonicity_check(&m, &[-1.5], &[-1.5], 1.0, 10, &cfg).unwrap();
        assert!(same.pass && same.psi0_margin == 0.0 && same.cone_slack == 0.0);
        assert!(monotonicity_check(&m, &[-2.0], &[-1.0], 1.0, 10, &cfg).unwrap().pass);
        assert!(monotonicity_check(&m, &[-1.0], &[-2.0], 1.0, 10, &cfg).is_err());
        // Degenerate Gaussian on the orthant: admissibility forces A⁰ = 0 there,
        // leaving an inward drift and linear ψ.
        let g = AffineModel::new(vec![1.0], m1(-1.0), vec![m1(0.0), m1(0.0)], vec![], StateSpace::canonical(1, 1).unwrap())
            .unwrap();
        assert!(monotonicity_check(&g, &[-3.0], &[-0.2], 2.0, 10, &cfg).unwrap().pass);
    }

    #[test]
    fn interior_examples() {
        let cfg = SolverConfig::default();
        let m = cir(vec![]);
        assert!(interior_preservation_check(&m, &[C::new(0.0, 1.0)], 1.0, 10, &cfg).is_err());
        let r = interior_preservation_check(&m, &[C::new(-1.0, 0.0)], 5.0, 20, &cfg).unwrap();
        assert!(r.pass);
        assert!((r.min_margin - 1.0 / 6.0).abs() < 1e-8);
        assert!(interior_preservation_check(&m, &[C::new(-1.0, 4.0)], 5.0, 20, &cfg).unwrap().pass);
    }

    #[test]
    fn regularity_examples() {
        assert!(!regularity_lu_check(&cir(vec![]), &[1.0]).unwrap());
        let on = cir(vec![JumpMeasure::zero(), JumpMeasure::atoms([(1.0, vec![1.0])])]);
        assert!(regularity_lu_check(&on, &[1.0]).unwrap());
        let lattice = cir(vec![JumpMeasure::zero(), JumpMeasure::atoms([(1.0, vec![std::f64::consts::TAU])])]);
        assert!(!regularity_lu_check(&lattice, &[1.0]).unwrap());
    }

    fn cones() -> Vec<SelfDualCone> {
        vec![SelfDualCone::Orthant(3), SelfDualCone::VechPsd(2), SelfDualCone::Lorentz(3)]
    }

    proptest! {
        #[test]
        fn self_duality_on_samples(k in 0usize..3, seed in 0u64..1000) {
            let cone = cones()[k];
            let pts = cone.space::<f64>().sample(8, seed);
            for x in &pts {
                for y in &pts {
                    prop_assert!(cone.inner(x, y) >= -1e-12);
                }
            }
        }

        #[test]
        fn points_outside_have_a_separating_witness(k in 0usize..3, raw in prop::collection::vec(-3.0f64..3.0, 3)) {
            let cone = cones()[k];
            prop_assume!(cone.margin(&raw) < -1e-6);
            // The projection residual p(x) - x lies in the cone and pairs negatively with x.
            let p = cone.space::<f64>().project(&raw);
            let w: Vec<f64> = p.iter().zip(&raw).map(|(a, b)| a - b).collect();
            prop_assert!(cone.contains(&w, 1e-9));
            prop_assert!(cone.inner(&raw, &w) < 0.0);
        }

        #[test]
        fn phi_is_homogeneous(k in 0usize..3, seed in 0u64..1000, alpha in 0.1f64..5.0) {
            let cone = cones()[k];
            for x in cone.space::<f64>().sample(4, seed) {
                let ax: Vec<f64> = x.iter().map(|v| alpha * v).collect();
                let lhs = cone.boundary_phi(&ax);
                let rhs = alpha.powi(cone.phi_degree() as i32) * cone.boundary_phi(&x);
                let scale = (alpha * (1.0 + norm(&x))).powi(cone.phi_degree() as i32);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn phi_sign_on_interior_and_boundary(k in 0usize..3, seed in 0u64..1000) {
            let cone = cones()[k];
            let space = cone.space::<f64>();
            for (j, x) in space.sample(6, seed).into_iter().enumerate() {
                if j % 2 == 0 {
                    prop_assert!(cone.boundary_phi(&x) > 0.0);
                } else if cone.margin(&x).abs() < 1e-12 {
                    prop_assert!(cone.boundary_phi(&x).abs() < 1e-10 * (1.0 + norm(&x).powi(cone.phi_degree() as i32)));
                }
            }
        }

        #[test]
        fn order_is_partial(k in 0usize..3, seed in 0u64..1000) {
            let cone = cones()[k];
            let pts = cone.space::<f64>().sample(3, seed);
            let (a, d1, d2) = (&pts[0], &pts[1], &pts[2]);
            let b: Vec<f64> = a.iter().zip(d1).map(|(x, y)| x + y).collect();
            let c: Vec<f64> = b.iter().zip(d2).map(|(x, y)| x + y).collect();
            prop_assert!(cone_leq(&cone, a, a));
            prop_assert!(cone_leq(&cone, a, &b) && cone_leq(&cone, &b, &c) && cone_leq(&cone, a, &c));
            if cone_leq(&cone, &b, a) {
                prop_assert!(norm(&d1[..]) < 1e-12);
            }
        }
    }
}
