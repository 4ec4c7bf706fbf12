//! Generalized Riccati equations `ψ̇ᵢ = Rᵢ(ψ)`, `ψᵢ(0) = uᵢ`, `ψ₀(0) = 0`, with
//!
//! ```text
//! Rᵢ(y) = yᵀaⁱ + ½ yᵀAⁱy + ∫(e^{yᵀz} - 1 - yᵀz) Kⁱ(dz),   i = 0..p.
//! ```
//!
//! `ψ₀` is integrated as component 0 of the state, so it is continuous in `t`
//! and never needs a complex logarithm.

mod dopri;
pub mod identities;

use nalgebra::DMatrix;
use num_complex::Complex;

pub use identities::{flow_identity_residual, k_eval, mean_flow, variation_of_constants_residual};

use crate::error::{Error, Result};
use crate::model::{AffineModel, JumpMeasure};
use crate::num::{cnorm, Real};
use dopri::{Integrator, Outcome, RhsFailure, Trajectory};

type C<T> = Complex<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// `‖ψ‖` above this radius counts as explosion.
    pub r_max: T,
    pub max_steps: usize,
    /// Explosion brackets are refined to `width ≤ explosion_bracket_tol · t_hi`.
    pub explosion_bracket_tol: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Self {
            rel_tol: T::lit(1e-10).max(T::lit(100.0) * eps),
            abs_tol: T::lit(1e-12).max(eps),
            r_max: T::lit(1e8),
            max_steps: 1_000_000,
            explosion_bracket_tol: T::lit(1e-8).max(T::lit(16.0) * eps),
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_rel_tol(mut self, rel_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if !(pos(self.rel_tol) && pos(self.abs_tol) && pos(self.r_max) && pos(self.explosion_bracket_tol)) {
            return Err(Error::InvalidConfig("solver tolerances and radius must be positive".into()));
        }
        if self.rel_tol >= T::one() || self.max_steps == 0 {
            return Err(Error::InvalidConfig("rel_tol must be < 1 and max_steps > 0".into()));
        }
        Ok(())
    }
}

/// The right-hand side `R = (R₀, .., Rₚ)` with parameters laid out for repeated evaluation.
#[derive(Debug, Clone)]
pub struct RiccatiSystem<T> {
    drift: Vec<Vec<T>>,
    diffusion: Vec<DMatrix<T>>,
    jumps: Vec<JumpMeasure<T>>,
    active_jumps: Vec<bool>,
}

impl<T: Real> RiccatiSystem<T> {
    pub fn new(model: &AffineModel<T>) -> Self {
        let p = model.dim();
        Self {
            drift: (0..=p).map(|i| model.drift_column(i)).collect(),
            diffusion: model.diffusion().to_vec(),
            jumps: model.jumps().to_vec(),
            active_jumps: model.jumps().iter().map(|k| !k.is_zero()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.drift[0].len()
    }

    /// `(R₀(y), .., Rₚ(y))`.
    pub fn eval(&self, y: &[C<T>]) -> Result<Vec<C<T>>> {
        let p = self.dim();
        if y.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: y.len() });
        }
        let half = T::lit(0.5);
        let mut out = Vec::with_capacity(p + 1);
        for i in 0..=p {
            let a = &self.drift[i];
            let m = &self.diffusion[i];
            let mut lin = C::new(T::zero(), T::zero());
            let mut quad = C::new(T::zero(), T::zero());
            for r in 0..p {
                lin = lin + y[r] * a[r];
                let mut row = C::new(T::zero(), T::zero());
                for c in 0..p {
                    row = row + y[c] * m[(r, c)];
                }
                quad = quad + y[r] * row;
            }
            let mut v = lin + quad * half;
            if self.active_jumps[i] {
                v = v + self.jumps[i].exp_moment_integral(y)?;
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Derivative of the augmented state `(ψ₀, ψ)`.
    fn augmented(&self, state: &[C<T>]) -> Result<Vec<C<T>>, RhsFailure> {
        self.eval(&state[1..]).map_err(RhsFailure::Hard)
    }
}

/// `(R₀(y), .., Rₚ(y))` for a single argument.
pub fn riccati_rhs<T: Real>(model: &AffineModel<T>, y: &[C<T>]) -> Result<Vec<C<T>>> {
    RiccatiSystem::new(model).eval(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict<T> {
    /// The solution exists on `[0, horizon]`.
    Solved { horizon: T },
    /// `‖ψ‖` stays below the explosion radius up to `t_lo` and exceeds it before `t_hi`.
    Exploded { t_lo: T, t_hi: T },
}

/// A solution of the Riccati system on a grid, with a dense evaluator up to the
/// last solved time.
#[derive(Debug, Clone)]
pub struct RiccatiSolution<T> {
    u: Vec<C<T>>,
    traj: Trajectory<T>,
    verdict: Verdict<T>,
}

impl<T: Real> RiccatiSolution<T> {
    pub fn u(&self) -> &[C<T>] {
        &self.u
    }

    pub fn verdict(&self) -> Verdict<T> {
        self.verdict
    }

    pub fn is_solved(&self) -> bool {
        matches!(self.verdict, Verdict::Solved { .. })
    }

    /// Strictly increasing grid, starting at 0.
    pub fn grid(&self) -> &[T] {
        &self.traj.times
    }

    pub fn psi0(&self, k: usize) -> C<T> {
        self.traj.states[k][0]
    }

    pub fn psi(&self, k: usize) -> &[C<T>] {
        &self.traj.states[k][1..]
    }

    /// Last time the solution is known at.
    pub fn last_time(&self) -> T {
        *self.traj.times.last().expect("grid contains t = 0")
    }

    /// `(ψ₀, ψ)` at the last grid point.
    pub fn terminal(&self) -> (C<T>, &[C<T>]) {
        let k = self.traj.times.len() - 1;
        (self.psi0(k), self.psi(k))
    }

    /// Dense evaluation `(ψ₀(t), ψ(t))` for `0 ≤ t ≤ last_time()`.
    pub fn eval(&self, t: T) -> Option<(C<T>, Vec<C<T>>)> {
        let times = &self.traj.times;
        if t < T::zero() || t > self.last_time() {
            return None;
        }
        if let Ok(k) = times.binary_search_by(|s| s.partial_cmp(&t).expect("finite grid")) {
            return Some((self.psi0(k), self.psi(k).to_vec()));
        }
        let k = times.partition_point(|s| *s < t) - 1;
        let y = self.traj.dense[k].eval(t);
        Some((y[0], y[1..].to_vec()))
    }

    /// Rows `t, Re ψ₀, Im ψ₀, Re ψ₁..ₚ, Im ψ₁..ₚ`.
    pub fn to_csv(&self) -> String {
        let p = self.u.len();
        let mut out = String::from("t,re_psi0,im_psi0");
        for i in 1..=p {
            out.push_str(&format!(",re_psi{i}"));
        }
        for i in 1..=p {
            out.push_str(&format!(",im_psi{i}"));
        }
        out.push('\n');
        for (k, t) in self.traj.times.iter().enumerate() {
            let s = &self.traj.states[k];
            out.push_str(&format!("{},{},{}", t, s[0].re, s[0].im));
            for v in &s[1..] {
                out.push_str(&format!(",{}", v.re));
            }
            for v in &s[1..] {
                out.push_str(&format!(",{}", v.im));
            }
            out.push('\n');
        }
        out
    }

    /// Largest `‖ψ̇ - R(ψ)‖` at step midpoints, using the derivative of the dense
    /// interpolant (central difference over a small fraction of each step).
    pub fn midpoint_residual(&self, model: &AffineModel<T>) -> Result<T> {
        let sys = RiccatiSystem::new(model);
        let mut worst = T::zero();
        for step in &self.traj.dense {
            let mid = step.t0 + step.h * T::lit(0.5);
            let dt = step.h * T::lit(1e-3);
            let ya = step.eval(mid - dt);
            let yb = step.eval(mid + dt);
            let y = step.eval(mid);
            let r = sys.eval(&y[1..])?;
            let d: Vec<C<T>> = (0..y.len()).map(|i| (yb[i] - ya[i]) / (dt + dt) - r[i]).collect();
            let scale = T::one() + cnorm(&r);
            worst = worst.max(cnorm(&d) / scale);
        }
        Ok(worst)
    }
}

/// Integrates `(ψ₀, ψ)` from `ψ(0) = u` to `horizon`. If `‖ψ‖` exceeds `cfg.r_max`
/// first, the blow-up is bracketed by bisection on the integration horizon.
pub fn solve_riccati<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    horizon: T,
    cfg: &SolverConfig<T>,
) -> Result<RiccatiSolution<T>> {
    cfg.validate()?;
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(Error::InvalidConfig(format!("horizon must be positive and finite, got {horizon}")));
    }
    if u.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: u.len() });
    }
    let sys = RiccatiSystem::new(model);
    let mut y0 = Vec::with_capacity(u.len() + 1);
    y0.push(C::new(T::zero(), T::zero()));
    y0.extend_from_slice(u);

    let mut integ = Integrator { rhs: |y: &[C<T>]| sys.augmented(y), cfg, steps_left: cfg.max_steps };
    let mut traj = Trajectory::default();
    let (mut t_lo, mut y_lo, mut t_hi) = match integ.run(T::zero(), y0, horizon, None, &mut traj) {
        Outcome::Reached => {
            return Ok(RiccatiSolution { u: u.to_vec(), traj, verdict: Verdict::Solved { horizon } });
        }
        Outcome::Exceeded { t_lo, y_lo, t_hi } => (t_lo, y_lo, t_hi),
        Outcome::Failed(e) => return Err(e),
    };

    let mut guard = 0;
    while t_hi - t_lo > cfg.explosion_bracket_tol * t_hi && guard < 400 {
        guard += 1;
        let mid = t_lo + (t_hi - t_lo) * T::lit(0.5);
        let mut piece = Trajectory::default();
        match integ.run(t_lo, y_lo.clone(), mid, None, &mut piece) {
            Outcome::Reached => {
                append(&mut traj, piece);
                t_lo = mid;
                y_lo = traj.states.last().cloned().expect("non-empty trajectory");
            }
            Outcome::Exceeded { t_lo: lo, y_lo: ylo, t_hi: hi } => {
                append(&mut traj, piece);
                t_lo = lo;
                y_lo = ylo;
                t_hi = hi.min(mid);
            }
            Outcome::Failed(e) => return Err(e),
        }
    }
    // Keep the grid consistent with the bracket's lower end.
    debug_assert!(*traj.times.last().expect("non-empty") == t_lo);
    Ok(RiccatiSolution { u: u.to_vec(), traj, verdict: Verdict::Exploded { t_lo, t_hi } })
}

fn append<T: Real>(traj: &mut Trajectory<T>, piece: Trajectory<T>) {
    // `piece` starts at the current last point of `traj`.
    traj.times.extend(piece.times.into_iter().skip(1));
    traj.states.extend(piece.states.into_iter().skip(1));
    traj.dense.extend(piece.dense);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplosionTime<T> {
    /// Blow-up detected; `bracket.0 ≤ estimate ≤ bracket.1`.
    Finite { estimate: T, bracket: (T, T) },
    /// No blow-up up to `t_max` (the explosion time may still be finite beyond it).
    ExceedsHorizon(T),
}

/// Explosion time `t_∞(u)`, searched on `[0, t_max]`.
///
/// The detected crossing `‖ψ‖ = r_max` happens shortly before the blow-up; the
/// estimate adds the remaining time `‖ψ‖ / (d‖ψ‖/dt)` at the crossing, which is
/// exact for quadratic blow-up `‖ψ‖ ~ 1/(c(t_∞ - t))`.
pub fn explosion_time<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    t_max: T,
    cfg: &SolverConfig<T>,
) -> Result<ExplosionTime<T>> {
    let sol = solve_riccati(model, u, t_max, cfg)?;
    match sol.verdict() {
        Verdict::Solved { .. } => Ok(ExplosionTime::ExceedsHorizon(t_max)),
        Verdict::Exploded { t_lo, t_hi } => {
            let (_, psi) = sol.terminal();
            let remaining = match riccati_rhs(model, psi) {
                Ok(r) => {
                    let n = cnorm(psi);
                    let rate = psi
                        .iter()
                        .zip(&r[1..])
                        .map(|(a, b)| (a.conj() * *b).re)
                        .sum::<T>()
                        / n;
                    let rem = n / rate;
                    if rem.is_finite() && rem > T::zero() {
                        rem
                    } else {
                        T::zero()
                    }
                }
                Err(_) => T::zero(),
            };
            let estimate = t_lo + remaining;
            let upper = t_hi.max(estimate + (t_hi - t_lo));
            Ok(ExplosionTime::Finite { estimate, bracket: (t_lo, upper) })
        }
    }
}
