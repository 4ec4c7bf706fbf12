//! Finite-activity jump measures and their exponential compensator integrals.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::num::{cdot_real, norm, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Atom<T> {
    pub weight: T,
    pub z: Vec<T>,
}

/// A (signed) jump measure `K^i`.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpMeasure<T> {
    /// `Σ w_k δ_{z_k}`.
    FiniteAtomic(Vec<Atom<T>>),
    /// `mass · rate · e^{-rate·s} ds` along `z = s·direction`, `s > 0`.
    ExponentialRay { mass: T, rate: T, direction: Vec<T> },
    /// Density along `z = s·direction` tabulated at increasing nodes `s_j`,
    /// integrated with the trapezoid rule.
    TabulatedDensity { direction: Vec<T>, nodes: Vec<T>, density: Vec<T> },
}

/// `e^w - 1 - w`, accurate for small `|w|`.
pub fn exp_remainder<T: Real>(w: Complex<T>) -> Complex<T> {
    if w.norm() < T::lit(1e-3) {
        let w2 = w * w;
        let c = |v: f64| Complex::new(T::lit(v), T::zero());
        w2 * (c(0.5) + w * (c(1.0 / 6.0) + w * (c(1.0 / 24.0) + w * c(1.0 / 120.0))))
    } else {
        w.exp() - Complex::new(T::one(), T::zero()) - w
    }
}

impl<T: Real> Default for JumpMeasure<T> {
    fn default() -> Self {
        Self::FiniteAtomic(Vec::new())
    }
}

impl<T: Real> JumpMeasure<T> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atoms(atoms: impl IntoIterator<Item = (T, Vec<T>)>) -> Self {
        Self::FiniteAtomic(atoms.into_iter().map(|(weight, z)| Atom { weight, z }).collect())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::FiniteAtomic(a) => a.iter().all(|a| a.weight == T::zero()),
            Self::ExponentialRay { mass, .. } => *mass == T::zero(),
            Self::TabulatedDensity { density, .. } => density.iter().all(|d| *d == T::zero()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::FiniteAtomic(_) => "finite_atomic",
            Self::ExponentialRay { .. } => "exponential_ray",
            Self::TabulatedDensity { .. } => "tabulated_density",
        }
    }

    /// Checks the structural invariants for a `p`-dimensional state.
    pub fn validate(&self, p: usize) -> Result<()> {
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        match self {
            Self::FiniteAtomic(atoms) => {
                for a in atoms {
                    if a.z.len() != p {
                        return Err(Error::DimensionMismatch { expected: p, got: a.z.len() });
                    }
                    if !finite(&a.z) || !a.weight.is_finite() {
                        return Err(Error::InvalidModel("non-finite atom".into()));
                    }
                    if a.z.iter().all(|v| *v == T::zero()) {
                        return Err(Error::InvalidModel("jump atom at z = 0".into()));
                    }
                }
            }
            Self::ExponentialRay { mass, rate, direction } => {
                if direction.len() != p {
                    return Err(Error::DimensionMismatch { expected: p, got: direction.len() });
                }
                if !(*rate > T::zero()) || !rate.is_finite() || !mass.is_finite() {
                    return Err(Error::InvalidModel("exponential ray needs a finite rate > 0".into()));
                }
                if (norm(direction) - T::one()).abs() > T::lit(1e-12).max(T::lit(16.0) * T::epsilon()) {
                    return Err(Error::InvalidModel("exponential ray direction must be a unit vector".into()));
                }
            }
            Self::TabulatedDensity { direction, nodes, density } => {
                if direction.len() != p {
                    return Err(Error::DimensionMismatch { expected: p, got: direction.len() });
                }
                if nodes.len() != density.len() || nodes.len() < 2 {
                    return Err(Error::InvalidModel("tabulated density needs >= 2 nodes with matching values".into()));
                }
                if !nodes.windows(2).all(|w| w[1] > w[0]) || !finite(nodes) || !finite(density) {
                    return Err(Error::InvalidModel("tabulated nodes must be finite and strictly increasing".into()));
                }
                if nodes.iter().any(|s| *s == T::zero()) || norm(direction) == T::zero() {
                    return Err(Error::InvalidModel("tabulated density must not charge z = 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Trapezoid weights `ω_j` with `∫ f(s) ds ≈ Σ ω_j f(s_j)`.
    fn trapezoid(nodes: &[T]) -> Vec<T> {
        let n = nodes.len();
        let half = T::lit(0.5);
        (0..n)
            .map(|j| {
                let left = if j > 0 { nodes[j] - nodes[j - 1] } else { T::zero() };
                let right = if j + 1 < n { nodes[j + 1] - nodes[j] } else { T::zero() };
                half * (left + right)
            })
            .collect()
    }

    /// Discrete representation `(weight, z)`; exact for atoms and for the
    /// trapezoid rule of a tabulated density. `None` for the exponential ray.
    pub fn as_atoms(&self) -> Option<Vec<Atom<T>>> {
        match self {
            Self::FiniteAtomic(a) => Some(a.clone()),
            Self::ExponentialRay { .. } => None,
            Self::TabulatedDensity { direction, nodes, density } => Some(
                Self::trapezoid(nodes)
                    .into_iter()
                    .zip(nodes.iter().zip(density))
                    .map(|(w, (s, f))| Atom { weight: w * *f, z: direction.iter().map(|d| *d * *s).collect() })
                    .collect(),
            ),
        }
    }

    /// `∫(e^{y·z} - 1 - y·z) K(dz)`.
    pub fn exp_moment_integral(&self, y: &[Complex<T>]) -> Result<Complex<T>> {
        let zero = Complex::new(T::zero(), T::zero());
        match self {
            Self::FiniteAtomic(atoms) => Ok(atoms
                .iter()
                .fold(zero, |acc, a| acc + exp_remainder(cdot_real(y, &a.z)) * a.weight)),
            Self::ExponentialRay { mass, rate, direction } => {
                let w = cdot_real(y, direction);
                if w.re >= *rate {
                    return Err(Error::DivergentIntegral { re_yd: w.re.as_f64(), rate: rate.as_f64() });
                }
                // λ ∫₀^∞ (e^{ws} - 1 - ws) ρ e^{-ρs} ds = λ w² / (ρ(ρ - w))
                Ok(w * w * *mass / ((Complex::new(*rate, T::zero()) - w) * *rate))
            }
            Self::TabulatedDensity { .. } => {
                let atoms = self.as_atoms().unwrap_or_default();
                Ok(atoms
                    .iter()
                    .fold(zero, |acc, a| acc + exp_remainder(cdot_real(y, &a.z)) * a.weight))
            }
        }
    }

    /// For tabulated densities: whether the integrand at the last node exceeds
    /// `1e-8` of the total, i.e. the grid probably truncates the support.
    pub fn truncation_flag(&self, y: &[Complex<T>]) -> bool {
        let Self::TabulatedDensity { direction, nodes, density } = self else {
            return false;
        };
        let total = match self.exp_moment_integral(y) {
            Ok(v) => v.norm(),
            Err(_) => return true,
        };
        let last = nodes.len() - 1;
        let z: Vec<T> = direction.iter().map(|d| *d * nodes[last]).collect();
        let tail = (exp_remainder(cdot_real(y, &z)) * density[last]).norm();
        tail > T::lit(1e-8) * total
    }

    /// Total (signed) mass `K(F)`.
    pub fn total_mass(&self) -> T {
        match self {
            Self::FiniteAtomic(atoms) => atoms.iter().map(|a| a.weight).sum(),
            Self::ExponentialRay { mass, .. } => *mass,
            Self::TabulatedDensity { .. } => self.as_atoms().unwrap_or_default().iter().map(|a| a.weight).sum(),
        }
    }

    /// First moment `∫ z K(dz)`.
    pub fn mean_jump(&self, p: usize) -> Vec<T> {
        match self {
            Self::ExponentialRay { mass, rate, direction } => direction.iter().map(|d| *mass * *d / *rate).collect(),
            _ => {
                let mut out = vec![T::zero(); p];
                for a in self.as_atoms().unwrap_or_default() {
                    for (o, z) in out.iter_mut().zip(&a.z) {
                        *o += a.weight * *z;
                    }
                }
                out
            }
        }
    }

    /// Whether `∫_{|z|>1} e^{k·z} |K|(dz) < ∞` for every `k`.
    pub fn has_all_exponential_moments(&self) -> bool {
        match self {
            Self::FiniteAtomic(_) | Self::TabulatedDensity { .. } => true,
            Self::ExponentialRay { mass, .. } => *mass == T::zero(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex<f64> {
        Complex::new(re, 0.0)
    }

    #[test]
    fn zero_argument_gives_zero() {
        let ms = [
            JumpMeasure::atoms([(2.0, vec![1.0])]),
            JumpMeasure::ExponentialRay { mass: 1.0, rate: 3.0, direction: vec![1.0] },
            JumpMeasure::TabulatedDensity { direction: vec![1.0], nodes: vec![0.1, 0.5, 1.0], density: vec![1.0, 2.0, 0.5] },
        ];
        for m in ms {
            assert_eq!(m.exp_moment_integral(&[c(0.0)]).unwrap(), c(0.0));
        }
    }

    #[test]
    fn atomic_hand_value() {
        let m = JumpMeasure::atoms([(2.0, vec![1.0])]);
        let v = m.exp_moment_integral(&[c(1.0)]).unwrap();
        let expected = 2.0 * (std::f64::consts::E - 2.0);
        assert!((v.re - expected).abs() < 1e-14 && v.im == 0.0);
        assert!((v.re - 1.43656).abs() < 1e-5);
    }

    #[test]
    fn ray_closed_form_and_divergence() {
        let m = JumpMeasure::ExponentialRay { mass: 1.0, rate: 3.0, direction: vec![1.0] };
        let v = m.exp_moment_integral(&[c(1.0)]).unwrap();
        assert!((v.re - 1.0 / 6.0).abs() < 1e-15);
        assert!(matches!(m.exp_moment_integral(&[c(3.0)]), Err(Error::DivergentIntegral { .. })));
        assert!(!m.has_all_exponential_moments());
    }

    #[test]
    fn small_argument_series_matches_direct_evaluation() {
        for w in [1e-4f64, -3e-4, 9e-4] {
            // Σ_{k≥2} wᵏ/k! summed to 20 terms.
            let mut term = w;
            let mut direct = 0.0;
            for k in 2..20 {
                term *= w / k as f64;
                direct += term;
            }
            let series = exp_remainder(c(w)).re;
            assert!((direct - series).abs() <= 1e-14 * direct.abs());
        }
    }

    #[test]
    fn tabulated_flags_truncated_grid() {
        let nodes: Vec<f64> = (1..=50).map(|k| k as f64 * 0.02).collect();
        let cut = JumpMeasure::TabulatedDensity {
            direction: vec![1.0],
            density: nodes.iter().map(|s| (-s).exp()).collect(),
            nodes: nodes.clone(),
        };
        assert!(cut.truncation_flag(&[c(0.5)]));
        let wide: Vec<f64> = (1..=4000).map(|k| k as f64 * 0.01).collect();
        let full = JumpMeasure::TabulatedDensity {
            direction: vec![1.0],
            density: wide.iter().map(|s| 3.0 * (-3.0 * s).exp()).collect(),
            nodes: wide,
        };
        assert!(!full.truncation_flag(&[c(0.5)]));
        assert!(full.has_all_exponential_moments());
    }

    #[test]
    fn validation_rejects_bad_families() {
        assert!(JumpMeasure::atoms([(1.0, vec![0.0])]).validate(1).is_err());
        assert!(JumpMeasure::ExponentialRay { mass: 1.0, rate: 0.0, direction: vec![1.0] }.validate(1).is_err());
        assert!(JumpMeasure::ExponentialRay { mass: 1.0, rate: 1.0, direction: vec![2.0] }.validate(1).is_err());
        assert!(JumpMeasure::atoms([(1.0, vec![1.0, 2.0])]).validate(1).is_err());
    }
}
