//! The affine transform `E_x e^{uᵀX_t} = exp(ψ₀(t,u) + ψ(t,u)ᵀx)` with its three
//! regimes, ray probes of the real effective domain, damped jump models and the
//! infinite-divisibility rescaling.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{AffineModel, Atom, JumpMeasure};
use crate::num::{cdot_real, cnorm, is_real, Real};
use crate::riccati::{explosion_time, solve_riccati, ExplosionTime, SolverConfig, Verdict};

type C<T> = Complex<T>;

#[derive(Debug, Clone, PartialEq)]
pub enum TransformValue<T> {
    /// `value = exp(psi0 + psiᵀx)`.
    Finite { value: C<T>, psi0: C<T>, psi: Vec<C<T>> },
    /// Real `u` past the explosion time: the expectation is `+∞`.
    Explosive,
    /// Complex `u ∈ U` past the explosion time: the expectation is `0`.
    ZeroRegion,
    /// No value is implied; the string says why.
    Unknown(String),
}

impl<T: Real> TransformValue<T> {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Finite { .. } => "finite",
            Self::Explosive => "explosive",
            Self::ZeroRegion => "zero_region",
            Self::Unknown(_) => "unknown",
        }
    }

    pub fn value(&self) -> Option<C<T>> {
        match self {
            Self::Finite { value, .. } => Some(*value),
            Self::ZeroRegion => Some(C::new(T::zero(), T::zero())),
            _ => None,
        }
    }
}

/// Regime of `u` once the Riccati solution has exploded before the horizon.
pub fn classify_after_explosion<T: Real>(model: &AffineModel<T>, u: &[C<T>]) -> TransformValue<T> {
    if is_real(u) {
        return TransformValue::Explosive;
    }
    match model.space().in_u(u) {
        Ok(true) => TransformValue::ZeroRegion,
        Ok(false) => TransformValue::Unknown("complex u outside U exploded before the horizon".into()),
        Err(e) => TransformValue::Unknown(format!("cannot decide membership in U: {e}")),
    }
}

fn finite<T: Real>(psi0: C<T>, psi: Vec<C<T>>, x: &[T]) -> TransformValue<T> {
    let value = (psi0 + cdot_real(&psi, x)).exp();
    TransformValue::Finite { value, psi0, psi }
}

/// `E_x exp(uᵀX_t)`.
pub fn transform<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    x: &[T],
    t: T,
    cfg: &SolverConfig<T>,
) -> Result<TransformValue<T>> {
    let p = model.dim();
    for len in [u.len(), x.len()] {
        if len != p {
            return Err(Error::DimensionMismatch { expected: p, got: len });
        }
    }
    if !model.space().contains(x) {
        return Err(Error::StateSpaceMismatch { margin: model.space().margin(x).as_f64() });
    }
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!("t must be finite and >= 0, got {t}")));
    }
    if t == T::zero() {
        return Ok(finite(C::new(T::zero(), T::zero()), u.to_vec(), x));
    }
    let sol = match solve_riccati(model, u, t, cfg) {
        Ok(sol) => sol,
        Err(e @ Error::DivergentIntegral { .. }) if is_real(u) => {
            return Ok(TransformValue::Unknown(format!("real u leaves the jump integrability region: {e}")));
        }
        Err(e) => return Err(e),
    };
    Ok(match sol.verdict() {
        Verdict::Solved { .. } => {
            let (psi0, psi) = sol.terminal();
            finite(psi0, psi.to_vec(), x)
        }
        Verdict::Exploded { .. } => classify_after_explosion(model, u),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RayOutcome<T> {
    Exceeds,
    Explodes { t_inf: T },
    Divergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaySample<T> {
    pub lambda: T,
    pub outcome: RayOutcome<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayProbe<T> {
    pub direction: Vec<T>,
    pub horizon: T,
    /// `+∞` when `λ_max · direction` still survives the horizon.
    pub lambda_star: T,
    /// Width of the final bracket around `lambda_star` (0 when infinite).
    pub bracket: T,
    /// Every probe in the order evaluated.
    pub samples: Vec<RaySample<T>>,
}

impl<T: Real> RayProbe<T> {
    /// Rows `lambda,t_inf_estimate,verdict`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,t_inf_estimate,verdict\n");
        for s in &self.samples {
            let (t, v) = match &s.outcome {
                RayOutcome::Exceeds => (String::new(), "exceeds_horizon"),
                RayOutcome::Explodes { t_inf } => (t_inf.to_string(), "finite"),
                RayOutcome::Divergent => (String::new(), "divergent_integral"),
            };
            out.push_str(&format!("{},{},{}\n", s.lambda, t, v));
        }
        out
    }
}

const RAY_REL_TOL: f64 = 1e-6;

/// `λ* = inf{λ ≥ 0 : t_∞(λ·direction) ≤ T}` by bisection on `[0, λ_max]`.
///
/// A divergent jump integral along the ray counts as leaving the domain, since
/// the transform is infinite there.
pub fn effective_domain_ray<T: Real>(
    model: &AffineModel<T>,
    direction: &[T],
    horizon: T,
    lambda_max: T,
    cfg: &SolverConfig<T>,
) -> Result<RayProbe<T>> {
    if direction.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: direction.len() });
    }
    if direction.iter().all(|d| *d == T::zero()) {
        return Err(Error::InvalidConfig("ray direction must be non-zero".into()));
    }
    if !(horizon > T::zero()) || !(lambda_max > T::zero()) || !lambda_max.is_finite() {
        return Err(Error::InvalidConfig("horizon and lambda_max must be positive".into()));
    }
    let mut samples = Vec::new();
    let mut probe = |lambda: T| -> Result<bool> {
        let u: Vec<C<T>> = direction.iter().map(|d| C::new(*d * lambda, T::zero())).collect();
        let outcome = match explosion_time(model, &u, horizon, cfg) {
            Ok(ExplosionTime::ExceedsHorizon(_)) => RayOutcome::Exceeds,
            Ok(ExplosionTime::Finite { estimate, .. }) => RayOutcome::Explodes { t_inf: estimate },
            Err(Error::DivergentIntegral { .. }) => RayOutcome::Divergent,
            Err(e) => return Err(e),
        };
        let out = !matches!(outcome, RayOutcome::Exceeds);
        samples.push(RaySample { lambda, outcome });
        Ok(out)
    };
    if !probe(lambda_max)? {
        return Ok(RayProbe {
            direction: direction.to_vec(),
            horizon,
            lambda_star: T::infinity(),
            bracket: T::zero(),
            samples,
        });
    }
    let (mut lo, mut hi) = (T::zero(), lambda_max);
    let tol = T::lit(RAY_REL_TOL).max(T::lit(16.0) * T::epsilon());
    while hi - lo > tol * hi {
        let mid = (lo + hi) * T::lit(0.5);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(RayProbe {
        direction: direction.to_vec(),
        horizon,
        lambda_star: (lo + hi) * T::lit(0.5),
        bracket: hi - lo,
        samples,
    })
}

fn rebuild<T: Real>(model: &AffineModel<T>, a0: Vec<T>, a: nalgebra::DMatrix<T>, jumps: Vec<JumpMeasure<T>>) -> Result<AffineModel<T>> {
    AffineModel::new(a0, a, model.diffusion().to_vec(), jumps, model.space().clone())
}

/// The model with `K^n(x,dz) = e^{-|z|²/n} K(x,dz)` and drift
/// `b^n(x) = b(x) + ∫ z (e^{-|z|²/n} - 1) K(x,dz)`.
pub fn damped_model<T: Real>(model: &AffineModel<T>, n: u64) -> Result<AffineModel<T>> {
    if n == 0 {
        return Err(Error::InvalidConfig("damping index n must be >= 1".into()));
    }
    let nf = T::from_u64(n).expect("representable");
    let p = model.dim();
    let damp = |z: &[T]| (-z.iter().map(|v| *v * *v).sum::<T>() / nf).exp();
    let mut a0 = model.a0().to_vec();
    let mut a = model.a().clone();
    let mut jumps = Vec::with_capacity(p + 1);
    for (i, k) in model.jumps().iter().enumerate() {
        let mut shift = vec![T::zero(); p];
        let damped = match k {
            JumpMeasure::ExponentialRay { .. } if !k.is_zero() => {
                return Err(Error::UnsupportedFamily(
                    "exponential ray has no closed damped form; tabulate it first".into(),
                ));
            }
            JumpMeasure::ExponentialRay { .. } => k.clone(),
            JumpMeasure::FiniteAtomic(atoms) => JumpMeasure::FiniteAtomic(
                atoms
                    .iter()
                    .map(|at| {
                        let f = damp(&at.z);
                        for (s, z) in shift.iter_mut().zip(&at.z) {
                            *s += *z * at.weight * (f - T::one());
                        }
                        Atom { weight: at.weight * f, z: at.z.clone() }
                    })
                    .collect(),
            ),
            JumpMeasure::TabulatedDensity { direction, nodes, density } => {
                for at in k.as_atoms().unwrap_or_default() {
                    let f = damp(&at.z);
                    for (s, z) in shift.iter_mut().zip(&at.z) {
                        *s += *z * at.weight * (f - T::one());
                    }
                }
                let dd = direction.iter().map(|v| *v * *v).sum::<T>();
                JumpMeasure::TabulatedDensity {
                    direction: direction.clone(),
                    nodes: nodes.clone(),
                    density: nodes.iter().zip(density).map(|(s, f)| *f * (-dd * *s * *s / nf).exp()).collect(),
                }
            }
        };
        for r in 0..p {
            if i == 0 {
                a0[r] += shift[r];
            } else {
                a[(r, i - 1)] += shift[r];
            }
        }
        jumps.push(damped);
    }
    rebuild(model, a0, a, jumps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DampedSequence<T> {
    pub n_list: Vec<u64>,
    pub values: Vec<TransformValue<T>>,
    /// `|v_{k+1} - v_k|` between consecutive finite values.
    pub cauchy_differences: Vec<T>,
    /// The transform of the undamped model, when it can be evaluated.
    pub undamped: Option<TransformValue<T>>,
    /// `|v_k - undamped|` per entry of `n_list`, when both are finite.
    pub distances_to_undamped: Vec<T>,
}

/// Transforms of `damped_model(model, n)` for each `n` in `n_list`, `u ∈ U`.
pub fn damped_transform_sequence<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    x: &[T],
    t: T,
    n_list: &[u64],
    cfg: &SolverConfig<T>,
) -> Result<DampedSequence<T>> {
    if !model.space().in_u(u)? {
        return Err(Error::InvalidConfig("damped transforms need u in U".into()));
    }
    let values = n_list
        .iter()
        .map(|n| transform(&damped_model(model, *n)?, u, x, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    let finite: Vec<Option<C<T>>> = values.iter().map(TransformValue::value).collect();
    let cauchy_differences = finite
        .windows(2)
        .filter_map(|w| Some((w[1]? - w[0]?).norm()))
        .collect();
    let undamped = match transform(model, u, x, t, cfg) {
        Ok(v) => Some(v),
        Err(Error::DivergentIntegral { .. }) => None,
        Err(e) => return Err(e),
    };
    let distances_to_undamped = match undamped.as_ref().and_then(TransformValue::value) {
        Some(target) => finite.iter().filter_map(|v| Some((v.as_ref()? - target).norm())).collect(),
        None => Vec::new(),
    };
    Ok(DampedSequence { n_list: n_list.to_vec(), values, cauchy_differences, undamped, distances_to_undamped })
}

/// The parameter set `(aⁱ, n Aⁱ, (1/n) Kⁱ(dz/n))`: each atom `(w, z)` becomes
/// `(w/n, n z)`.
pub fn scaled_model<T: Real>(model: &AffineModel<T>, n: u64) -> Result<AffineModel<T>> {
    if n == 0 {
        return Err(Error::InvalidConfig("scaling index n must be >= 1".into()));
    }
    let nf = T::from_u64(n).expect("representable");
    let jumps = model
        .jumps()
        .iter()
        .map(|k| match k {
            JumpMeasure::FiniteAtomic(atoms) => JumpMeasure::FiniteAtomic(
                atoms
                    .iter()
                    .map(|at| Atom { weight: at.weight / nf, z: at.z.iter().map(|v| *v * nf).collect() })
                    .collect(),
            ),
            // λρe^{-ρs}ds pushed forward by s ↦ ns and divided by n.
            JumpMeasure::ExponentialRay { mass, rate, direction } => {
                JumpMeasure::ExponentialRay { mass: *mass / nf, rate: *rate / nf, direction: direction.clone() }
            }
            // Trapezoid weights scale with the nodes, so the density takes 1/n².
            JumpMeasure::TabulatedDensity { direction, nodes, density } => JumpMeasure::TabulatedDensity {
                direction: direction.clone(),
                nodes: nodes.iter().map(|s| *s * nf).collect(),
                density: density.iter().map(|f| *f / (nf * nf)).collect(),
            },
        })
        .collect();
    let diffusion = model.diffusion().iter().map(|m| m * nf).collect();
    AffineModel::new(model.a0().to_vec(), model.a().clone(), diffusion, jumps, model.space().clone())
}

/// `max(‖ψ^{(n)}(t,u) - ψ(t,nu)/n‖, |ψ₀^{(n)}(t,u) - ψ₀(t,nu)/n|)`, where `ψ^{(n)}`
/// solves the system of [`scaled_model`].
pub fn infinite_divisibility_check<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    t: T,
    n: u64,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    let scaled = scaled_model(model, n)?;
    let nf = T::from_u64(n).expect("representable");
    let nu: Vec<C<T>> = u.iter().map(|v| *v * nf).collect();
    let solve = |m: &AffineModel<T>, u: &[C<T>]| -> Result<_> {
        let sol = solve_riccati(m, u, t, cfg)?;
        match sol.verdict() {
            Verdict::Solved { .. } => Ok(sol),
            Verdict::Exploded { t_lo, t_hi } => Err(Error::ExplosionBeforeHorizon {
                t_lo: t_lo.as_f64(),
                t_hi: t_hi.as_f64(),
                horizon: t.as_f64(),
            }),
        }
    };
    let a = solve(&scaled, u)?;
    let b = solve(model, &nu)?;
    let (a0, ap) = a.terminal();
    let (b0, bp) = b.terminal();
    let d: Vec<C<T>> = ap.iter().zip(bp).map(|(x, y)| *x - *y / nf).collect();
    Ok(cnorm(&d).max((a0 - b0 / nf).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateSpace;
    use nalgebra::DMatrix;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    fn cir(jumps: Vec<JumpMeasure<f64>>) -> AffineModel<f64> {
        AffineModel::new(vec![1.0], m1(0.0), vec![m1(0.0), m1(2.0)], jumps, StateSpace::canonical(1, 1).unwrap()).unwrap()
    }

    fn gaussian() -> AffineModel<f64> {
        AffineModel::new(vec![0.5], m1(-1.0), vec![m1(1.0), m1(0.0)], vec![], StateSpace::canonical(0, 1).unwrap()).unwrap()
    }

    #[test]
    fn transform_examples() {
        let cfg = SolverConfig::default();
        let m = cir(vec![]);
        let one = transform(&m, &[c(0.0, 0.0)], &[1.0], 1.0, &cfg).unwrap();
        assert_eq!(one.value(), Some(c(1.0, 0.0)));
        let v = transform(&m, &[c(0.5, 0.0)], &[1.0], 1.0, &cfg).unwrap().value().unwrap();
        assert!((v - c(2.0 * std::f64::consts::E, 0.0)).norm() < 1e-8);
        assert_eq!(transform(&m, &[c(2.0, 0.0)], &[1.0], 1.0, &cfg).unwrap(), TransformValue::Explosive);
        assert!(matches!(
            transform(&m, &[c(0.5, 0.0)], &[-1.0], 1.0, &cfg),
            Err(Error::StateSpaceMismatch { .. })
        ));
    }

    #[test]
    fn zero_horizon_is_exponential_of_u_dot_x() {
        let v = transform(&cir(vec![]), &[c(0.3, 0.2)], &[2.0], 0.0, &SolverConfig::default()).unwrap();
        assert!((v.value().unwrap() - c(0.6, 0.4).exp()).norm() < 1e-15);
    }

    #[test]
    fn classification_after_explosion() {
        let m = cir(vec![]);
        assert_eq!(classify_after_explosion(&m, &[c(3.0, 0.0)]), TransformValue::Explosive);
        assert_eq!(classify_after_explosion(&m, &[c(-1.0, 4.0)]), TransformValue::ZeroRegion);
        assert!(matches!(classify_after_explosion(&m, &[c(1.0, 4.0)]), TransformValue::Unknown(_)));
    }

    #[test]
    fn ray_examples() {
        let cfg = SolverConfig::default();
        let m = cir(vec![]);
        let up = effective_domain_ray(&m, &[1.0], 1.0, 10.0, &cfg).unwrap();
        assert!((up.lambda_star - 1.0).abs() < 2e-6, "{}", up.lambda_star);
        let down = effective_domain_ray(&m, &[-1.0], 1.0, 100.0, &cfg).unwrap();
        assert!(down.lambda_star.is_infinite());
        let short = effective_domain_ray(&m, &[1.0], 1e-6, 1e7, &cfg).unwrap();
        assert!(short.lambda_star > 1e5);
        assert!(up.to_csv().starts_with("lambda,t_inf_estimate,verdict\n10,"));
    }

    #[test]
    fn damped_model_examples() {
        let m = cir(vec![JumpMeasure::atoms([(1.0, vec![1.0])]), JumpMeasure::zero()]);
        let d = damped_model(&m, 1).unwrap();
        let JumpMeasure::FiniteAtomic(atoms) = &d.jumps()[0] else { panic!() };
        assert!((atoms[0].weight - (-1.0f64).exp()).abs() < 1e-15);
        assert!((d.a0()[0] - (1.0 + (-1.0f64).exp() - 1.0)).abs() < 1e-15);
        let far = damped_model(&m, 1_000_000).unwrap();
        assert!((far.a0()[0] - 1.0).abs() < 1e-6);
        let plain = cir(vec![]);
        assert_eq!(damped_model(&plain, 7).unwrap(), plain);
        let ray = cir(vec![JumpMeasure::ExponentialRay { mass: 1.0, rate: 3.0, direction: vec![1.0] }, JumpMeasure::zero()]);
        assert!(matches!(damped_model(&ray, 3), Err(Error::UnsupportedFamily(_))));
    }

    #[test]
    fn damped_sequence_converges_to_undamped() {
        let cfg = SolverConfig::default();
        let m = cir(vec![JumpMeasure::atoms([(1.0, vec![0.5]), (0.5, vec![1.0])]), JumpMeasure::zero()]);
        let seq = damped_transform_sequence(&m, &[c(-1.0, 2.0)], &[1.0], 1.0, &[10, 100, 1000], &cfg).unwrap();
        let d = &seq.distances_to_undamped;
        assert!(d[0] > d[1] && d[1] > d[2] && d[2] < 1e-3, "{d:?}");
        let zero = damped_transform_sequence(&m, &[c(0.0, 0.0)], &[1.0], 1.0, &[10, 100], &cfg).unwrap();
        assert!(zero.values.iter().all(|v| v.value() == Some(c(1.0, 0.0))));
        let plain = damped_transform_sequence(&cir(vec![]), &[c(-0.5, 1.0)], &[1.0], 1.0, &[10, 100], &cfg).unwrap();
        assert_eq!(plain.cauchy_differences, vec![0.0]);
    }

    #[test]
    fn scaled_model_examples() {
        assert_eq!(scaled_model(&gaussian(), 1).unwrap(), gaussian());
        let s = scaled_model(&gaussian(), 2).unwrap();
        assert_eq!(s.diffusion()[0][(0, 0)], 2.0);
        let m = cir(vec![JumpMeasure::atoms([(3.0, vec![0.5])]), JumpMeasure::zero()]);
        let scaled = scaled_model(&m, 2).unwrap();
        let JumpMeasure::FiniteAtomic(atoms) = &scaled.jumps()[0] else { panic!() };
        assert_eq!(atoms[0], Atom { weight: 1.5, z: vec![1.0] });
    }

    #[test]
    fn scaled_tabulated_and_ray_integrals_rescale() {
        // ∫(e^{yz}-1-yz)(1/n)K(dz/n) = (1/n)∫(e^{nyz}-1-nyz)K(dz).
        let n = 4u64;
        let y = [c(0.3, 0.1)];
        let ny = [c(1.2, 0.4)];
        for k in [
            JumpMeasure::ExponentialRay { mass: 2.0, rate: 3.0, direction: vec![1.0] },
            JumpMeasure::TabulatedDensity { direction: vec![1.0], nodes: vec![0.25, 0.5, 1.0, 1.5], density: vec![1.0, 0.7, 0.4, 0.1] },
        ] {
            let m = cir(vec![k.clone(), JumpMeasure::zero()]);
            let scaled = scaled_model(&m, n).unwrap();
            let lhs = scaled.jumps()[0].exp_moment_integral(&y).unwrap();
            let rhs = k.exp_moment_integral(&ny).unwrap() / n as f64;
            assert!((lhs - rhs).norm() < 1e-13, "{lhs} {rhs}");
        }
    }

    #[test]
    fn infinite_divisibility_examples() {
        let cfg = SolverConfig::default();
        assert!(infinite_divisibility_check(&cir(vec![]), &[c(0.3, 0.0)], 0.5, 1, &cfg).unwrap() < 1e-12);
        assert!(infinite_divisibility_check(&gaussian(), &[c(0.4, -0.7)], 1.0, 3, &cfg).unwrap() < 1e-9);
        assert!(infinite_divisibility_check(&cir(vec![]), &[c(0.3, 0.0)], 0.5, 2, &cfg).unwrap() < 1e-8);
    }
}
