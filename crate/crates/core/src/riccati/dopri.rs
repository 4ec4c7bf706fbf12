//! Dormand–Prince 5(4) with the order-4 continuous extension, on complex vectors.

use num_complex::Complex;

use super::SolverConfig;
use crate::error::Error;
use crate::num::{cnorm, Real};

type C<T> = Complex<T>;

// Butcher tableau. The system is autonomous, so the nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763675.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Why a right-hand side evaluation failed.
#[derive(Debug, Clone)]
pub(crate) enum RhsFailure {
    NonFinite,
    Hard(Error),
}

/// Continuous extension over one accepted step.
#[derive(Debug, Clone)]
pub(crate) struct DenseStep<T> {
    pub t0: T,
    pub h: T,
    pub coeffs: [Vec<C<T>>; 5],
}

impl<T: Real> DenseStep<T> {
    pub fn eval(&self, t: T) -> Vec<C<T>> {
        let s = (t - self.t0) / self.h;
        let s1 = T::one() - s;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        (0..r1.len())
            .map(|i| r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * s1) * s) * s1) * s)
            .collect()
    }
}

/// Accepted steps of one integration: `times[k]`, `states[k]`, and `dense[k]`
/// covering `[times[k], times[k+1]]`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<C<T>>>,
    pub dense: Vec<DenseStep<T>>,
}

pub(crate) enum Outcome<T> {
    Reached,
    /// Integration cannot be continued past `t_hi`: either an accepted step
    /// pushed `‖ψ‖` beyond the explosion radius or the step size collapsed on
    /// a non-finite right-hand side. `(t_lo, y_lo)` is the last state kept.
    Exceeded { t_lo: T, y_lo: Vec<C<T>>, t_hi: T },
    Failed(Error),
}

/// Norm that decides explosion: `‖ψ‖`, i.e. the state without the `ψ₀` slot.
fn blowup_norm<T: Real>(y: &[C<T>]) -> T {
    cnorm(&y[1..])
}

pub(crate) struct Integrator<'a, T, F> {
    pub rhs: F,
    pub cfg: &'a SolverConfig<T>,
    pub steps_left: usize,
}

impl<'a, T, F> Integrator<'a, T, F>
where
    T: Real,
    F: FnMut(&[C<T>]) -> Result<Vec<C<T>>, RhsFailure>,
{
    fn err_norm(&self, y0: &[C<T>], y1: &[C<T>], e: &[C<T>]) -> T {
        let mut acc = T::zero();
        for i in 0..y0.len() {
            let sc_re = self.cfg.abs_tol + self.cfg.rel_tol * y0[i].re.abs().max(y1[i].re.abs());
            let sc_im = self.cfg.abs_tol + self.cfg.rel_tol * y0[i].im.abs().max(y1[i].im.abs());
            acc = acc + (e[i].re / sc_re).powi(2) + (e[i].im / sc_im).powi(2);
        }
        (acc / T::lit((2 * y0.len()) as f64)).sqrt()
    }

    fn initial_step(&mut self, y0: &[C<T>], f0: &[C<T>], span: T) -> T {
        let sc = |v: &C<T>| self.cfg.abs_tol + self.cfg.rel_tol * v.norm();
        let n = T::lit(y0.len() as f64);
        let d0 = (y0.iter().map(|v| (v.norm() / sc(v)).powi(2)).sum::<T>() / n).sqrt();
        let d1 = (f0.iter().zip(y0).map(|(f, v)| (f.norm() / sc(v)).powi(2)).sum::<T>() / n).sqrt();
        let h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) { T::lit(1e-6) } else { T::lit(0.01) * d0 / d1 };
        let h0 = h0.min(span);
        let y1: Vec<C<T>> = y0.iter().zip(f0).map(|(y, f)| *y + *f * h0).collect();
        let h1 = match (self.rhs)(&y1) {
            Ok(f1) => {
                let d2 = (f1.iter().zip(f0).zip(y0).map(|((a, b), v)| ((*a - *b).norm() / sc(v)).powi(2)).sum::<T>() / n)
                    .sqrt()
                    / h0;
                let m = d1.max(d2);
                if m <= T::lit(1e-15) {
                    (h0 * T::lit(1e-3)).max(T::lit(1e-6))
                } else {
                    (T::lit(0.01) / m).powf(T::lit(0.2))
                }
            }
            Err(_) => h0 * T::lit(0.1),
        };
        (T::lit(100.0) * h0).min(h1).min(span)
    }

    /// Integrates from `(t0, y0)` to `t_end`, appending accepted steps to `traj`
    /// (the initial point is appended when `traj` is empty).
    pub fn run(&mut self, t0: T, y0: Vec<C<T>>, t_end: T, h_start: Option<T>, traj: &mut Trajectory<T>) -> Outcome<T> {
        let mut t = t0;
        let mut y = y0;
        if traj.times.is_empty() {
            traj.times.push(t);
            traj.states.push(y.clone());
        }
        let mut k1 = match (self.rhs)(&y) {
            Ok(k) => k,
            Err(RhsFailure::Hard(e)) => return Outcome::Failed(e),
            Err(RhsFailure::NonFinite) => {
                return if t == T::zero() {
                    Outcome::Failed(Error::NonFiniteRhs { t: t.as_f64() })
                } else {
                    Outcome::Exceeded { t_lo: t, y_lo: y, t_hi: t }
                };
            }
        };
        let mut h = h_start.unwrap_or_else(|| self.initial_step(&y, &k1, t_end - t0)).min(t_end - t0);
        let n = y.len();
        let mut last_failure: Option<RhsFailure> = None;
        let mut rejected = false;
        loop {
            if t >= t_end {
                return Outcome::Reached;
            }
            let h_min = T::lit(16.0) * T::epsilon() * (T::one() + t.abs());
            if h < h_min {
                return match last_failure {
                    Some(RhsFailure::Hard(e)) => Outcome::Failed(e),
                    _ => Outcome::Exceeded { t_lo: t, y_lo: y, t_hi: t + h_min },
                };
            }
            if self.steps_left == 0 {
                return Outcome::Failed(Error::StepLimitExceeded(self.cfg.max_steps));
            }
            self.steps_left -= 1;
            let last = t + h >= t_end - T::lit(4.0) * T::epsilon() * t_end.abs();
            if last {
                h = t_end - t;
            }
            let step = self.stages(&y, &k1, h);
            let (y1, k7, err, ks) = match step {
                Ok(v) => v,
                Err(fail) => {
                    last_failure = Some(fail);
                    h *= T::lit(0.25);
                    rejected = true;
                    continue;
                }
            };
            let err = self.err_norm(&y, &y1, &err);
            if !(err <= T::one()) {
                let fac = if err.is_finite() { (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2)) } else { T::lit(0.2) };
                h *= fac.min(T::one());
                rejected = true;
                continue;
            }
            last_failure = None;
            let t_new = if last { t_end } else { t + h };
            if blowup_norm(&y1) > self.cfg.r_max {
                return Outcome::Exceeded { t_lo: t, y_lo: y, t_hi: t_new };
            }
            let [k1s, k3, k4, k5, k6] = ks;
            let hh = Complex::new(h, T::zero());
            let mut r2 = Vec::with_capacity(n);
            let mut r3 = Vec::with_capacity(n);
            let mut r4 = Vec::with_capacity(n);
            let mut r5 = Vec::with_capacity(n);
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = hh * k1s[i] - ydiff;
                r2.push(ydiff);
                r3.push(bspl);
                r4.push(ydiff - hh * k7[i] - bspl);
                r5.push(
                    hh * (k1s[i] * T::lit(D1)
                        + k3[i] * T::lit(D3)
                        + k4[i] * T::lit(D4)
                        + k5[i] * T::lit(D5)
                        + k6[i] * T::lit(D6)
                        + k7[i] * T::lit(D7)),
                );
            }
            traj.dense.push(DenseStep { t0: t, h: t_new - t, coeffs: [y.clone(), r2, r3, r4, r5] });
            traj.times.push(t_new);
            traj.states.push(y1.clone());
            t = t_new;
            y = y1;
            k1 = k7;
            let grow = if err == T::zero() { T::lit(5.0) } else { (T::lit(0.9) * err.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2)) };
            h = if rejected { h * grow.min(T::one()) } else { h * grow };
            rejected = false;
        }
    }

    #[allow(clippy::type_complexity)]
    fn stages(
        &mut self,
        y: &[C<T>],
        k1: &[C<T>],
        h: T,
    ) -> Result<(Vec<C<T>>, Vec<C<T>>, Vec<C<T>>, [Vec<C<T>>; 5]), RhsFailure> {
        let n = y.len();
        let comb = |coef: &[(f64, &[C<T>])]| -> Vec<C<T>> {
            (0..n)
                .map(|i| {
                    let mut acc = y[i];
                    for (c, k) in coef {
                        acc = acc + k[i] * (h * T::lit(*c));
                    }
                    acc
                })
                .collect()
        };
        let finite = |v: &[C<T>]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        let eval = |x: Vec<C<T>>, rhs: &mut F| -> Result<Vec<C<T>>, RhsFailure> {
            if !finite(&x) {
                return Err(RhsFailure::NonFinite);
            }
            let k = rhs(&x)?;
            if finite(&k) {
                Ok(k)
            } else {
                Err(RhsFailure::NonFinite)
            }
        };
        let k2 = eval(comb(&[(A21, k1)]), &mut self.rhs)?;
        let k3 = eval(comb(&[(A31, k1), (A32, &k2)]), &mut self.rhs)?;
        let k4 = eval(comb(&[(A41, k1), (A42, &k2), (A43, &k3)]), &mut self.rhs)?;
        let k5 = eval(comb(&[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]), &mut self.rhs)?;
        let k6 = eval(comb(&[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]), &mut self.rhs)?;
        let y1 = comb(&[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = eval(y1.clone(), &mut self.rhs)?;
        let err: Vec<C<T>> = (0..n)
            .map(|i| {
                (k1[i] * T::lit(E1)
                    + k3[i] * T::lit(E3)
                    + k4[i] * T::lit(E4)
                    + k5[i] * T::lit(E5)
                    + k6[i] * T::lit(E6)
                    + k7[i] * T::lit(E7))
                    * h
            })
            .collect();
        Ok((y1, k7, err, [k1.to_vec(), k3, k4, k5, k6]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig<f64> {
        SolverConfig::default()
    }

    #[test]
    fn exponential_decay_with_dense_output() {
        let cfg = cfg();
        // y' = -y on the ψ slot, ψ₀' = 0.
        let mut it = Integrator {
            rhs: |y: &[C<f64>]| Ok(vec![C::new(0.0, 0.0), -y[1]]),
            cfg: &cfg,
            steps_left: 10_000,
        };
        let mut traj = Trajectory::default();
        let out = it.run(0.0, vec![C::new(0.0, 0.0), C::new(1.0, 0.0)], 2.0, None, &mut traj);
        assert!(matches!(out, Outcome::Reached));
        let last = traj.states.last().unwrap()[1].re;
        assert!((last - (-2.0f64).exp()).abs() < 1e-10);
        for step in &traj.dense {
            let t = step.t0 + 0.37 * step.h;
            let v = step.eval(t)[1].re;
            assert!((v - (-t).exp()).abs() < 1e-9, "dense at {t}: {v}");
        }
    }

    #[test]
    fn rotation_in_complex_plane() {
        let cfg = cfg();
        // y' = i y → y(t) = e^{it}
        let mut it = Integrator {
            rhs: |y: &[C<f64>]| Ok(vec![C::new(0.0, 0.0), y[1] * C::new(0.0, 1.0)]),
            cfg: &cfg,
            steps_left: 10_000,
        };
        let mut traj = Trajectory::default();
        it.run(0.0, vec![C::new(0.0, 0.0), C::new(1.0, 0.0)], 10.0, None, &mut traj);
        let v = traj.states.last().unwrap()[1];
        assert!((v - C::new(10f64.cos(), 10f64.sin())).norm() < 1e-8);
    }
}
