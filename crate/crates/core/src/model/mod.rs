//! Affine parameter sets `(a^i, A^i, K^i)` on a convex state space.

mod jump;
pub mod schema;
mod space;

use nalgebra::DMatrix;

pub use jump::{exp_remainder, Atom, JumpMeasure};
pub use space::{HalfSpace, SpaceKind, StateSpace};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, min_eigenvalue};
use crate::num::{norm, Real};

/// Drift `b(x) = a⁰ + Σ aⁱ xᵢ`, diffusion `c(x) = A⁰ + Σ Aⁱ xᵢ` and jump measure
/// `K(x, dz) = K⁰(dz) + Σ Kⁱ(dz) xᵢ` of an affine jump-diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineModel<T> {
    a0: Vec<T>,
    a: DMatrix<T>,
    diffusion: Vec<DMatrix<T>>,
    jumps: Vec<JumpMeasure<T>>,
    space: StateSpace<T>,
}

impl<T: Real> AffineModel<T> {
    /// `a` holds `a¹..aᵖ` as columns. `diffusion` and `jumps` are indexed `0..=p`;
    /// an empty `jumps` means a pure diffusion.
    pub fn new(
        a0: Vec<T>,
        a: DMatrix<T>,
        diffusion: Vec<DMatrix<T>>,
        jumps: Vec<JumpMeasure<T>>,
        space: StateSpace<T>,
    ) -> Result<Self> {
        let p = space.dim();
        if a0.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: a0.len() });
        }
        if a.nrows() != p || a.ncols() != p {
            return Err(Error::InvalidModel(format!("drift matrix must be {p}x{p}, got {}x{}", a.nrows(), a.ncols())));
        }
        if diffusion.len() != p + 1 {
            return Err(Error::InvalidModel(format!("expected {} diffusion matrices, got {}", p + 1, diffusion.len())));
        }
        let sym_tol = T::lit(1e-12);
        let mut sym = Vec::with_capacity(p + 1);
        for (i, m) in diffusion.into_iter().enumerate() {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::InvalidModel(format!("A^{i} must be {p}x{p}")));
            }
            if !(asymmetry(&m) <= sym_tol) {
                return Err(Error::InvalidModel(format!("A^{i} is not symmetric")));
            }
            sym.push((&m + m.transpose()) * T::lit(0.5));
        }
        let jumps = if jumps.is_empty() { vec![JumpMeasure::zero(); p + 1] } else { jumps };
        if jumps.len() != p + 1 {
            return Err(Error::InvalidModel(format!("expected {} jump measures, got {}", p + 1, jumps.len())));
        }
        for (i, k) in jumps.iter().enumerate() {
            k.validate(p).map_err(|e| match e {
                Error::InvalidModel(msg) => Error::InvalidModel(format!("K^{i}: {msg}")),
                other => other,
            })?;
        }
        if a0.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite drift".into()));
        }
        Ok(Self { a0, a, diffusion: sym, jumps, space })
    }

    pub fn dim(&self) -> usize {
        self.a0.len()
    }

    pub fn a0(&self) -> &[T] {
        &self.a0
    }

    /// Columns are `a¹..aᵖ`.
    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    /// `A⁰..Aᵖ`.
    pub fn diffusion(&self) -> &[DMatrix<T>] {
        &self.diffusion
    }

    /// `K⁰..Kᵖ`.
    pub fn jumps(&self) -> &[JumpMeasure<T>] {
        &self.jumps
    }

    pub fn space(&self) -> &StateSpace<T> {
        &self.space
    }

    pub fn has_jumps(&self) -> bool {
        self.jumps.iter().any(|k| !k.is_zero())
    }

    /// Drift vector `aⁱ` for `i = 0..=p`.
    pub fn drift_column(&self, i: usize) -> Vec<T> {
        if i == 0 {
            self.a0.clone()
        } else {
            self.a.column(i - 1).iter().copied().collect()
        }
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// `b(x) = a⁰ + Σ aⁱ xᵢ`.
    pub fn drift_at(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let p = self.dim();
        Ok((0..p)
            .map(|r| self.a0[r] + (0..p).map(|c| self.a[(r, c)] * x[c]).sum::<T>())
            .collect())
    }

    /// `c(x) = A⁰ + Σ Aⁱ xᵢ`, exactly symmetric.
    pub fn diffusion_at(&self, x: &[T]) -> Result<DMatrix<T>> {
        self.check_dim(x)?;
        let mut c = self.diffusion[0].clone();
        for (xi, ai) in x.iter().zip(&self.diffusion[1..]) {
            if *xi != T::zero() {
                c += ai * *xi;
            }
        }
        Ok(c)
    }

    /// `∫ z K(x, dz)`.
    pub fn mean_jump_at(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let p = self.dim();
        let mut out = self.jumps[0].mean_jump(p);
        for (xi, k) in x.iter().zip(&self.jumps[1..]) {
            if *xi != T::zero() && !k.is_zero() {
                for (o, m) in out.iter_mut().zip(k.mean_jump(p)) {
                    *o += *xi * m;
                }
            }
        }
        Ok(out)
    }

    /// The combined measure `K(x, ·)` grouped by support component.
    pub fn combined_jumps(&self) -> CombinedJumps<T> {
        CombinedJumps::new(&self.jumps, self.dim())
    }

    /// Per `Kⁱ`: whether all exponential moments of the tails are finite.
    pub fn exponential_moment_condition(&self) -> Vec<bool> {
        self.jumps.iter().map(JumpMeasure::has_all_exponential_moments).collect()
    }

    /// Sampled admissibility check: `c(x) ⪰ 0`, `K(x, ·) ≥ 0` and `x + z ∈ E` for
    /// charged jumps `z`, at `n_samples` points of `E`.
    pub fn check_admissibility(&self, n_samples: usize, seed: u64, tol: T) -> AdmissibilityReport<T> {
        let space = &self.space;
        let mut points = space.sample(n_samples.max(1), seed);
        points.push(space.interior_point().to_vec());
        let origin = vec![T::zero(); self.dim()];
        if space.contains(&origin) {
            points.push(origin);
        }
        let combined = self.combined_jumps();
        let mut min_eigen_c = T::infinity();
        let mut min_eigen_at = points[0].clone();
        let mut min_jump_weight = T::infinity();
        let mut support_violations = Vec::new();
        for x in &points {
            let c = self.diffusion_at(x).expect("sampled point has model dimension");
            let lam = min_eigenvalue(&c);
            if lam < min_eigen_c {
                min_eigen_c = lam;
                min_eigen_at = x.clone();
            }
            for (k, comp) in combined.components.iter().enumerate() {
                let w = combined.weight_at(k, x);
                min_jump_weight = min_jump_weight.min(w);
                if w > tol {
                    for z in comp.support_probes() {
                        let target: Vec<T> = x.iter().zip(&z).map(|(a, b)| *a + *b).collect();
                        if !space.contains(&target) {
                            support_violations.push(SupportViolation { z, x: x.clone() });
                        }
                    }
                }
            }
        }
        if combined.components.is_empty() {
            min_jump_weight = T::zero();
        }
        let pass = min_eigen_c >= -tol && min_jump_weight >= -tol && support_violations.is_empty();
        AdmissibilityReport { sampled_points: points, min_eigen_c, min_eigen_at, min_jump_weight, support_violations, tol, pass }
    }
}

/// One support component of a jump measure.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpComponent<T> {
    Atom(Vec<T>),
    Ray { rate: T, direction: Vec<T> },
}

impl<T: Real> JumpComponent<T> {
    /// Jump sizes used to test `x + z ∈ E`.
    fn support_probes(&self) -> Vec<Vec<T>> {
        match self {
            Self::Atom(z) => vec![z.clone()],
            Self::Ray { rate, direction } => [0.01, 0.1, 1.0, 10.0, 100.0]
                .iter()
                .map(|s| direction.iter().map(|d| *d * T::lit(*s) / *rate).collect())
                .collect(),
        }
    }

    fn same_as(&self, other: &Self) -> bool {
        let close = |a: &[T], b: &[T]| {
            a.iter().zip(b).all(|(x, y)| (*x - *y).abs() <= T::lit(1e-12) * (T::one() + x.abs()))
        };
        match (self, other) {
            (Self::Atom(a), Self::Atom(b)) => close(a, b),
            (Self::Ray { rate: r1, direction: d1 }, Self::Ray { rate: r2, direction: d2 }) => {
                close(&[*r1], &[*r2]) && close(d1, d2)
            }
            _ => false,
        }
    }
}

/// `K(x, ·) = Σ_k (w⁰_k + Σ wⁱ_k xᵢ) · component_k`.
#[derive(Debug, Clone)]
pub struct CombinedJumps<T> {
    pub components: Vec<JumpComponent<T>>,
    /// Row `k` holds `(w⁰_k, .., wᵖ_k)`.
    pub weights: Vec<Vec<T>>,
}

impl<T: Real> CombinedJumps<T> {
    fn new(jumps: &[JumpMeasure<T>], p: usize) -> Self {
        let mut out = Self { components: Vec::new(), weights: Vec::new() };
        for (i, k) in jumps.iter().enumerate() {
            let parts: Vec<(JumpComponent<T>, T)> = match k {
                JumpMeasure::ExponentialRay { mass, rate, direction } => {
                    vec![(JumpComponent::Ray { rate: *rate, direction: direction.clone() }, *mass)]
                }
                other => other
                    .as_atoms()
                    .unwrap_or_default()
                    .into_iter()
                    .map(|a| (JumpComponent::Atom(a.z), a.weight))
                    .collect(),
            };
            for (comp, w) in parts {
                let slot = match out.components.iter().position(|c| c.same_as(&comp)) {
                    Some(s) => s,
                    None => {
                        out.components.push(comp);
                        out.weights.push(vec![T::zero(); p + 1]);
                        out.components.len() - 1
                    }
                };
                out.weights[slot][i] += w;
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Combined weight of component `k` at state `x`.
    #[inline]
    pub fn weight_at(&self, k: usize, x: &[T]) -> T {
        let w = &self.weights[k];
        w[0] + x.iter().zip(&w[1..]).map(|(a, b)| *a * *b).sum::<T>()
    }

    /// Total intensity `K(x, F)`.
    pub fn intensity_at(&self, x: &[T]) -> T {
        (0..self.len()).map(|k| self.weight_at(k, x)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportViolation<T> {
    pub z: Vec<T>,
    pub x: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct AdmissibilityReport<T> {
    pub sampled_points: Vec<Vec<T>>,
    /// Smallest eigenvalue of `c(x)` over the samples.
    pub min_eigen_c: T,
    /// Sample attaining `min_eigen_c`.
    pub min_eigen_at: Vec<T>,
    pub min_jump_weight: T,
    pub support_violations: Vec<SupportViolation<T>>,
    pub tol: T,
    pub pass: bool,
}

impl<T: Real> AdmissibilityReport<T> {
    pub fn min_eigen_at_norm(&self) -> T {
        norm(&self.min_eigen_at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn cir() -> AffineModel<f64> {
        AffineModel::new(vec![1.0], m1(0.0), vec![m1(0.0), m1(2.0)], vec![], StateSpace::canonical(1, 1).unwrap())
            .unwrap()
    }

    fn indefinite_2d() -> AffineModel<f64> {
        let z = DMatrix::zeros(2, 2);
        AffineModel::new(
            vec![0.0, 0.0],
            z.clone(),
            vec![
                z,
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            ],
            vec![],
            StateSpace::canonical(0, 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn drift_examples() {
        let sp = StateSpace::canonical(0, 1).unwrap();
        let m = AffineModel::new(vec![1.0], m1(0.0), vec![m1(0.0); 2], vec![], sp.clone()).unwrap();
        assert_eq!(m.drift_at(&[5.0]).unwrap(), vec![1.0]);
        let m = AffineModel::new(vec![0.0], m1(-2.0), vec![m1(0.0); 2], vec![], sp).unwrap();
        assert_eq!(m.drift_at(&[3.0]).unwrap(), vec![-6.0]);
        let a = DMatrix::from_column_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let z = DMatrix::zeros(2, 2);
        let m = AffineModel::new(vec![1.0, 0.0], a, vec![z.clone(), z.clone(), z], vec![], StateSpace::canonical(0, 2).unwrap())
            .unwrap();
        assert_eq!(m.drift_at(&[2.0, 3.0]).unwrap(), vec![4.0, 2.0]);
        assert!(matches!(m.drift_at(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn diffusion_examples() {
        let m = indefinite_2d();
        let c = m.diffusion_at(&[0.7, -1.3]).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[0.7, -1.3, -1.3, -0.7]));
        let c = cir().diffusion_at(&[3.0]).unwrap();
        assert_eq!(c, m1(6.0));
        let z = DMatrix::zeros(2, 2);
        let m = AffineModel::new(
            vec![0.0; 2],
            z.clone(),
            vec![DMatrix::identity(2, 2), z.clone(), z],
            vec![],
            StateSpace::canonical(0, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(m.diffusion_at(&[4.0, -9.0]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn rejects_asymmetric_diffusion() {
        let z = DMatrix::zeros(2, 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        let r = AffineModel::new(vec![0.0; 2], z.clone(), vec![bad, z.clone(), z], vec![], StateSpace::canonical(0, 2).unwrap());
        assert!(r.is_err());
    }

    #[test]
    fn admissibility_examples() {
        assert!(cir().check_admissibility(200, 1, 1e-10).pass);

        let r = indefinite_2d().check_admissibility(200, 1, 1e-10);
        assert!(!r.pass);
        assert!(r.min_eigen_c < 0.0);
        assert!(r.min_eigen_at_norm() > 0.0);

        let neg = AffineModel::new(
            vec![1.0],
            m1(0.0),
            vec![m1(0.0), m1(2.0)],
            vec![JumpMeasure::atoms([(0.0, vec![1.0])]), JumpMeasure::atoms([(-1.0, vec![1.0])])],
            StateSpace::canonical(1, 1).unwrap(),
        )
        .unwrap();
        let r = neg.check_admissibility(100, 2, 1e-10);
        assert!(!r.pass && r.min_jump_weight < 0.0);
    }

    #[test]
    fn admissibility_flags_jumps_leaving_the_space() {
        let m = AffineModel::new(
            vec![1.0],
            m1(0.0),
            vec![m1(0.0), m1(2.0)],
            vec![JumpMeasure::atoms([(1.0, vec![-0.5])]), JumpMeasure::zero()],
            StateSpace::canonical(1, 1).unwrap(),
        )
        .unwrap();
        let r = m.check_admissibility(50, 4, 1e-10);
        assert!(!r.support_violations.is_empty() && !r.pass);
    }

    #[test]
    fn signed_weights_combine_across_measures() {
        // K⁰ = 2δ₁, K¹ = -δ₁: combined weight 2 - x₁.
        let m = AffineModel::new(
            vec![1.0],
            m1(0.0),
            vec![m1(0.0), m1(2.0)],
            vec![JumpMeasure::atoms([(2.0, vec![1.0])]), JumpMeasure::atoms([(-1.0, vec![1.0])])],
            StateSpace::canonical(1, 1).unwrap(),
        )
        .unwrap();
        let k = m.combined_jumps();
        assert_eq!(k.len(), 1);
        assert_eq!(k.weight_at(0, &[0.5]), 1.5);
        assert_eq!(k.intensity_at(&[3.0]), -1.0);
    }

    #[test]
    fn exponential_moment_condition_per_measure() {
        let m = AffineModel::new(
            vec![1.0],
            m1(0.0),
            vec![m1(0.0), m1(2.0)],
            vec![
                JumpMeasure::atoms([(1.0, vec![1.0])]),
                JumpMeasure::ExponentialRay { mass: 1.0, rate: 3.0, direction: vec![1.0] },
            ],
            StateSpace::canonical(1, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(m.exponential_moment_condition(), vec![true, false]);
    }

    proptest! {
        #[test]
        fn drift_and_diffusion_are_affine(
            x in prop::collection::vec(-5.0f64..5.0, 2),
            y in prop::collection::vec(-5.0f64..5.0, 2),
            alpha in 0.0f64..1.0,
        ) {
            let a = DMatrix::from_column_slice(2, 2, &[0.3, -1.2, 2.0, 0.5]);
            let m = AffineModel::new(
                vec![1.0, -0.5],
                a,
                vec![
                    DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]),
                    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
                    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
                ],
                vec![],
                StateSpace::canonical(0, 2).unwrap(),
            ).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let bx = m.drift_at(&x).unwrap();
            let by = m.drift_at(&y).unwrap();
            let bm = m.drift_at(&mix).unwrap();
            for i in 0..2 {
                prop_assert!((bm[i] - (alpha * bx[i] + (1.0 - alpha) * by[i])).abs() < 1e-13 * 50.0);
            }
            let cx = m.diffusion_at(&x).unwrap();
            let cy = m.diffusion_at(&y).unwrap();
            let cm = m.diffusion_at(&mix).unwrap();
            let lin = cx * alpha + cy * (1.0 - alpha);
            prop_assert!((cm.clone() - lin).abs().max() < 1e-13 * 50.0);
            prop_assert_eq!(cm[(0, 1)], cm[(1, 0)]);
        }

        #[test]
        fn compensator_integral_real_and_nonnegative_for_positive_measures(
            y in -3.0f64..2.9,
            w1 in 0.0f64..3.0,
            z1 in -2.0f64..2.0,
        ) {
            let y = [num_complex::Complex::new(y, 0.0)];
            let atoms = JumpMeasure::atoms([(w1, vec![z1 + 1e-3]), (0.5, vec![0.7])]);
            let ray = JumpMeasure::ExponentialRay { mass: w1, rate: 3.0, direction: vec![1.0] };
            for m in [atoms, ray] {
                let v = m.exp_moment_integral(&y).unwrap();
                prop_assert_eq!(v.im, 0.0);
                prop_assert!(v.re >= 0.0);
            }
        }
    }
}
