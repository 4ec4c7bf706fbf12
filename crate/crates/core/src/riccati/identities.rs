//! The mean flow `ẋ = b(x)`, the function `k(x, y)` and residuals of the two
//! identities every Riccati solution must satisfy: the flow property and the
//! variation-of-constants formula
//!
//! ```text
//! ψ₀(t,u) + ψ(t,u)ᵀx = uᵀ E_x X_t + ∫₀ᵗ k(E_x X_{t-s}, ψ(s,u)) ds.
//! ```

use nalgebra::DMatrix;
use num_complex::Complex;

use super::{solve_riccati, RiccatiSolution, SolverConfig, Verdict};
use crate::error::{Error, Result};
use crate::linalg::{expm, matvec};
use crate::model::AffineModel;
use crate::num::{cnorm, dot, to_complex, Real};
use crate::quad::adaptive_simpson;

type C<T> = Complex<T>;

const QUAD_TOL: f64 = 1e-9;
const QUAD_DEPTH: u32 = 40;

/// `(p+1) × (p+1)` generator of `t ↦ (1, x(t))` for `ẋ = a⁰ + a x`.
fn augmented_drift<T: Real>(model: &AffineModel<T>) -> DMatrix<T> {
    let p = model.dim();
    let mut m = DMatrix::zeros(p + 1, p + 1);
    for r in 0..p {
        m[(r + 1, 0)] = model.a0()[r];
        for c in 0..p {
            m[(r + 1, c + 1)] = model.a()[(r, c)];
        }
    }
    m
}

/// `E_x X_t`, the solution of `ẋ = b(x)` with `x(0) = x`.
pub fn mean_flow<T: Real>(model: &AffineModel<T>, x: &[T], t: T) -> Result<Vec<T>> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.len() });
    }
    if !(t >= T::zero()) {
        return Err(Error::InvalidConfig(format!("mean_flow needs t >= 0, got {t}")));
    }
    if t == T::zero() {
        return Ok(x.to_vec());
    }
    let e = expm(&(augmented_drift(model) * t));
    let mut v = Vec::with_capacity(x.len() + 1);
    v.push(T::one());
    v.extend_from_slice(x);
    Ok(matvec(&e, &v)[1..].to_vec())
}

/// `k(x, y) = ½ yᵀc(x)y + ∫(e^{yᵀz} - 1 - yᵀz) K(x, dz)` for real `y`.
pub fn k_eval<T: Real>(model: &AffineModel<T>, x: &[T], y: &[T]) -> Result<T> {
    let c = model.diffusion_at(x)?;
    if y.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: y.len() });
    }
    let quad = dot(y, &matvec(&c, y)) * T::lit(0.5);
    let yc = to_complex(y);
    let jumps = model.jumps();
    let mut integral = if jumps[0].is_zero() { T::zero() } else { jumps[0].exp_moment_integral(&yc)?.re };
    for (xi, k) in x.iter().zip(&jumps[1..]) {
        if *xi != T::zero() && !k.is_zero() {
            integral += *xi * k.exp_moment_integral(&yc)?.re;
        }
    }
    Ok(quad + integral)
}

fn solved_to<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    horizon: T,
    cfg: &SolverConfig<T>,
) -> Result<RiccatiSolution<T>> {
    let sol = solve_riccati(model, u, horizon, cfg)?;
    match sol.verdict() {
        Verdict::Solved { .. } => Ok(sol),
        Verdict::Exploded { t_lo, t_hi } => Err(Error::ExplosionBeforeHorizon {
            t_lo: t_lo.as_f64(),
            t_hi: t_hi.as_f64(),
            horizon: horizon.as_f64(),
        }),
    }
}

/// Largest of `‖ψ(s+t,u) - ψ(t,ψ(s,u))‖` and `|ψ₀(s+t,u) - ψ₀(s,u) - ψ₀(t,ψ(s,u))|`,
/// each side from its own solve.
pub fn flow_identity_residual<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    s: T,
    t: T,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    if !(s >= T::zero() && t >= T::zero()) {
        return Err(Error::InvalidConfig(format!("flow identity needs s, t >= 0, got s = {s}, t = {t}")));
    }
    if u.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: u.len() });
    }
    if s == T::zero() || t == T::zero() {
        return Ok(T::zero());
    }
    let whole = solved_to(model, u, s + t, cfg)?;
    let first = solved_to(model, u, s, cfg)?;
    let (f0, f) = first.terminal();
    let second = solved_to(model, f, t, cfg)?;
    let (w0, w) = whole.terminal();
    let (g0, g) = second.terminal();
    let d: Vec<C<T>> = w.iter().zip(g).map(|(a, b)| *a - *b).collect();
    Ok(cnorm(&d).max((w0 - f0 - g0).norm()))
}

/// `|ψ₀(t,u) + ψ(t,u)ᵀx - uᵀE_x X_t - ∫₀ᵗ k(E_x X_{t-s}, ψ(s,u)) ds|` for real `u`.
/// The integral uses adaptive Simpson with tolerance `1e-9` on the dense solution.
pub fn variation_of_constants_residual<T: Real>(
    model: &AffineModel<T>,
    u: &[T],
    x: &[T],
    t: T,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    if u.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: u.len() });
    }
    let mean_t = mean_flow(model, x, t)?;
    if t == T::zero() {
        return Ok(T::zero());
    }
    let sol = solved_to(model, &to_complex(u), t, cfg)?;
    let (psi0, psi) = sol.terminal();
    let lhs = psi0.re + psi.iter().zip(x).map(|(a, b)| a.re * *b).sum::<T>();

    // s ↦ E_x X_{t-s} = e^{M(t-s)}(1, x); a fresh exponential per node keeps the
    // integrand exact.
    let integrand = |s: T| -> Result<T> {
        let (_, y) = sol.eval(s).expect("node inside the solved interval");
        let y: Vec<T> = y.iter().map(|z| z.re).collect();
        let m = mean_flow(model, x, (t - s).max(T::zero()))?;
        k_eval(model, &m, &y)
    };
    let tol = T::lit(QUAD_TOL).max(T::lit(64.0) * T::epsilon());
    let integral = adaptive_simpson(integrand, T::zero(), t, tol, QUAD_DEPTH)?;
    let rhs = dot(u, &mean_t) + integral;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpMeasure, StateSpace};

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar(a0: f64, a: f64, c0: f64, c1: f64, jumps: Vec<JumpMeasure<f64>>, m: usize) -> AffineModel<f64> {
        AffineModel::new(vec![a0], m1(a), vec![m1(c0), m1(c1)], jumps, StateSpace::canonical(m, 1).unwrap()).unwrap()
    }

    fn rk4_oracle(a0: f64, a: f64, x: f64, t: f64) -> f64 {
        let n = 10_000;
        let h = t / n as f64;
        let f = |x: f64| a0 + a * x;
        let mut y = x;
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    }

    #[test]
    fn mean_flow_examples() {
        let zero = scalar(0.0, 0.0, 0.0, 0.0, vec![], 1);
        assert_eq!(mean_flow(&zero, &[1.7], 4.0).unwrap(), vec![1.7]);
        let constant = scalar(1.0, 0.0, 0.0, 0.0, vec![], 1);
        assert!((mean_flow(&constant, &[2.0], 3.0).unwrap()[0] - 5.0).abs() < 1e-13);
        let decay = scalar(0.0, -1.0, 0.0, 0.0, vec![], 0);
        let v = mean_flow(&decay, &[4.0], 1.0).unwrap()[0];
        assert!((v - rk4_oracle(0.0, -1.0, 4.0, 1.0)).abs() < 1e-12);
        assert!((v - 1.471_517_764_685_769).abs() < 1e-12);
    }

    #[test]
    fn mean_flow_matches_rk4_with_constant_and_linear_terms() {
        let m = scalar(0.7, -0.3, 0.0, 0.0, vec![], 0);
        let v = mean_flow(&m, &[2.0], 2.5).unwrap()[0];
        assert!((v - rk4_oracle(0.7, -0.3, 2.0, 2.5)).abs() < 1e-11);
    }

    #[test]
    fn k_eval_examples() {
        let cir = scalar(1.0, 0.0, 0.0, 2.0, vec![], 1);
        assert_eq!(k_eval(&cir, &[1.0], &[0.0]).unwrap(), 0.0);
        let flat = scalar(0.0, 0.0, 2.0, 0.0, vec![], 0);
        assert!((k_eval(&flat, &[0.3], &[3.0]).unwrap() - 9.0).abs() < 1e-14);
        let jumpy = scalar(1.0, 0.0, 0.0, 2.0, vec![JumpMeasure::zero(), JumpMeasure::atoms([(1.0, vec![1.0])])], 1);
        let expect = 1.0 + (std::f64::consts::E - 2.0);
        assert!((k_eval(&jumpy, &[1.0], &[1.0]).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn flow_identity_examples() {
        let cfg = SolverConfig::default();
        let square = scalar(0.0, 0.0, 0.0, 2.0, vec![], 1);
        let u = [C::new(0.5, 0.0)];
        assert_eq!(flow_identity_residual(&square, &u, 0.0, 0.7, &cfg).unwrap(), 0.0);
        assert!(flow_identity_residual(&square, &u, 0.4, 0.4, &cfg).unwrap() < 1e-8);
        let cir = scalar(1.0, 0.0, 0.0, 2.0, vec![], 1);
        assert!(flow_identity_residual(&cir, &[C::new(0.3, 0.0)], 0.5, 0.7, &cfg).unwrap() < 1e-8);
        assert!(matches!(
            flow_identity_residual(&square, &[C::new(1.0, 0.0)], 0.6, 0.6, &cfg),
            Err(Error::ExplosionBeforeHorizon { .. })
        ));
    }

    #[test]
    fn variation_of_constants_examples() {
        let cfg = SolverConfig::default();
        let cir = scalar(1.0, 0.0, 0.0, 2.0, vec![], 1);
        assert_eq!(variation_of_constants_residual(&cir, &[0.0], &[1.0], 1.0, &cfg).unwrap(), 0.0);
        let drift = scalar(0.4, -0.8, 0.0, 0.0, vec![], 1);
        assert!(variation_of_constants_residual(&drift, &[0.9], &[2.0], 1.5, &cfg).unwrap() < 1e-10);
        assert!(variation_of_constants_residual(&cir, &[0.5], &[1.0], 1.0, &cfg).unwrap() < 1e-7);
    }

    #[test]
    fn variation_of_constants_with_jumps() {
        let cfg = SolverConfig::default();
        let m = scalar(
            1.0,
            -0.5,
            0.1,
            0.5,
            vec![JumpMeasure::atoms([(0.5, vec![0.4])]), JumpMeasure::atoms([(0.3, vec![0.2])])],
            1,
        );
        assert!(variation_of_constants_residual(&m, &[0.4], &[1.3], 0.8, &cfg).unwrap() < 1e-7);
    }
}
