//! Monte Carlo simulation by an Euler scheme with post-step projection, and
//! statistical checks of the transform formula against it.
//!
//! Every normal, uniform and Poisson draw of path `i` at step `k` comes from a
//! counter-based generator addressed by `(seed, i, k)`, so a path does not
//! depend on how many other paths are simulated or on thread scheduling.

mod euler;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::schema::ModelFile;
use crate::model::AffineModel;
use crate::num::{cdot_real, dot, Real};
use crate::riccati::{solve_riccati, SolverConfig, Verdict};
use crate::rng::CounterRng;
use euler::Stepper;

type C<T> = Complex<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub n_paths: usize,
    pub dt: T,
    pub horizon: T,
    pub seed: u64,
    /// States are stored at `n_records + 1` equally spaced times including 0 and the horizon.
    pub n_records: usize,
    /// Negative eigenvalues of `c(x)` above `-clip_tol` (relative) are set to 0.
    pub clip_tol: T,
}

impl<T: Real> SimConfig<T> {
    pub fn new(n_paths: usize, dt: T, horizon: T, seed: u64) -> Self {
        Self { n_paths, dt, horizon, seed, n_records: 10, clip_tol: T::lit(1e-10) }
    }

    pub fn with_records(mut self, n_records: usize) -> Self {
        self.n_records = n_records;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_records == 0 {
            return Err(Error::InvalidConfig("n_paths and n_records must be positive".into()));
        }
        if !(self.dt > T::zero()) || !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfig("dt and horizon must be positive".into()));
        }
        Ok(())
    }

    /// Number of Euler steps; `dt` is shrunk so that they tile the horizon exactly.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(1).max(1)
    }
}

/// Simulated paths at the recording times, with per-path jump bookkeeping.
#[derive(Debug, Clone)]
pub struct PathEnsemble<T> {
    p: usize,
    times: Vec<T>,
    /// Row-major `[path][record][coordinate]`.
    states: Vec<T>,
    jump_counts: Vec<u64>,
    integrated_intensity: Vec<T>,
    sup_sq: Vec<T>,
    model_hash: String,
    config: SimConfig<T>,
}

impl<T: Real> PathEnsemble<T> {
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn n_paths(&self) -> usize {
        self.jump_counts.len()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn state(&self, path: usize, record: usize) -> &[T] {
        let off = (path * self.times.len() + record) * self.p;
        &self.states[off..off + self.p]
    }

    pub fn terminal(&self, path: usize) -> &[T] {
        self.state(path, self.times.len() - 1)
    }

    pub fn jump_counts(&self) -> &[u64] {
        &self.jump_counts
    }

    /// `∫₀ᵀ Λ(X_s) ds` per path (left-point rule on the Euler grid).
    pub fn integrated_intensity(&self) -> &[T] {
        &self.integrated_intensity
    }

    /// `sup_{t≤T} |X_t|²` per path over every Euler step.
    pub fn sup_sq(&self) -> &[T] {
        &self.sup_sq
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn config(&self) -> &SimConfig<T> {
        &self.config
    }

    /// Rows `t` followed by `mean_i, std_i, min_i, max_i` per coordinate.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.p {
            out.push_str(&format!(",mean{i},std{i},min{i},max{i}"));
        }
        out.push('\n');
        let n = T::from_usize(self.n_paths()).expect("path count");
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&t.to_string());
            for i in 0..self.p {
                let vals = (0..self.n_paths()).map(|j| self.state(j, k)[i]);
                let (mut s, mut s2, mut lo, mut hi) = (T::zero(), T::zero(), T::infinity(), T::neg_infinity());
                for v in vals {
                    s += v;
                    s2 += v * v;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let mean = s / n;
                let var = if self.n_paths() > 1 { (s2 - n * mean * mean).max(T::zero()) / (n - T::one()) } else { T::zero() };
                out.push_str(&format!(",{},{},{},{}", mean, var.sqrt(), lo, hi));
            }
            out.push('\n');
        }
        out
    }
}

struct PathOut<T> {
    states: Vec<T>,
    jumps: u64,
    intensity: T,
    sup_sq: T,
}

/// Euler paths `x ← Π_E(x + (b(x) - ∫zK(x,dz))dt + √c(x)·√dt·ξ + Σ jumps)` with
/// Poisson jump counts at the left-endpoint intensity.
pub fn simulate_paths<T: Real>(model: &AffineModel<T>, x0: &[T], cfg: &SimConfig<T>) -> Result<PathEnsemble<T>> {
    cfg.validate()?;
    let p = model.dim();
    if x0.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: x0.len() });
    }
    if !model.space().contains(x0) {
        return Err(Error::StateSpaceMismatch { margin: model.space().margin(x0).as_f64() });
    }
    let stepper = Stepper::new(model, cfg.clip_tol)?;
    let steps = cfg.steps();
    let dt = cfg.horizon / T::from_usize(steps).expect("step count");
    let sqrt_dt = dt.sqrt();
    let record_at: Vec<usize> = (0..=cfg.n_records).map(|j| (j * steps + cfg.n_records / 2) / cfg.n_records).collect();
    let times: Vec<T> = record_at.iter().map(|k| dt * T::from_usize(*k).expect("step index")).collect();

    let run = |path: usize| -> Result<PathOut<T>> {
        let mut rng = CounterRng::new(cfg.seed, path as u64, 0);
        let mut scratch = stepper.scratch();
        let mut x = x0.to_vec();
        let mut states = Vec::with_capacity(record_at.len() * p);
        states.extend_from_slice(&x);
        let mut next_record = 1;
        let mut jumps = 0u64;
        let mut intensity = T::zero();
        let mut sup_sq = dot(&x, &x);
        for k in 0..steps {
            rng.seek(path as u64, k as u64);
            let (n, lambda) = stepper.step(&mut x, dt, sqrt_dt, &mut rng, &mut scratch)?;
            jumps += n as u64;
            intensity += lambda * dt;
            sup_sq = sup_sq.max(dot(&x, &x));
            while next_record < record_at.len() && record_at[next_record] == k + 1 {
                states.extend_from_slice(&x);
                next_record += 1;
            }
        }
        Ok(PathOut { states, jumps, intensity, sup_sq })
    };
    let outs: Vec<PathOut<T>> = (0..cfg.n_paths).into_par_iter().map(run).collect::<Result<_>>()?;

    let mut states = Vec::with_capacity(cfg.n_paths * times.len() * p);
    let mut jump_counts = Vec::with_capacity(cfg.n_paths);
    let mut integrated_intensity = Vec::with_capacity(cfg.n_paths);
    let mut sup_sq = Vec::with_capacity(cfg.n_paths);
    for o in outs {
        states.extend(o.states);
        jump_counts.push(o.jumps);
        integrated_intensity.push(o.intensity);
        sup_sq.push(o.sup_sq);
    }
    Ok(PathEnsemble {
        p,
        times,
        states,
        jump_counts,
        integrated_intensity,
        sup_sq,
        model_hash: ModelFile::from_model(model).hash(),
        config: cfg.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<T> {
    pub value: C<T>,
    pub std_error: T,
    pub n_paths: usize,
}

/// Sample mean and standard error of complex samples; `√((var Re + var Im)/n)`.
pub fn complex_mean<T: Real>(samples: impl Iterator<Item = C<T>>) -> McEstimate<T> {
    let (mut n, mut s, mut sr2, mut si2) = (0usize, C::new(T::zero(), T::zero()), T::zero(), T::zero());
    let mut all: Vec<C<T>> = Vec::new();
    for v in samples {
        n += 1;
        s = s + v;
        all.push(v);
    }
    if n == 0 {
        return McEstimate { value: C::new(T::nan(), T::nan()), std_error: T::nan(), n_paths: 0 };
    }
    let nf = T::from_usize(n).expect("count");
    let mean = s / nf;
    if !(mean.re.is_finite() && mean.im.is_finite()) {
        return McEstimate { value: C::new(T::infinity(), T::zero()), std_error: T::infinity(), n_paths: n };
    }
    for v in &all {
        let d = *v - mean;
        sr2 += d.re * d.re;
        si2 += d.im * d.im;
    }
    let var = if n > 1 { (sr2 + si2) / (nf - T::one()) } else { T::zero() };
    McEstimate { value: mean, std_error: (var / nf).sqrt(), n_paths: n }
}

/// Estimate of `E exp(uᵀX_T)` from the terminal states.
pub fn mc_transform<T: Real>(ens: &PathEnsemble<T>, u: &[C<T>]) -> Result<McEstimate<T>> {
    mc_transform_at(ens, u, ens.times().len() - 1)
}

/// Estimate of `E exp(uᵀX_t)` at recording index `record`.
pub fn mc_transform_at<T: Real>(ens: &PathEnsemble<T>, u: &[C<T>], record: usize) -> Result<McEstimate<T>> {
    if u.len() != ens.dim() {
        return Err(Error::DimensionMismatch { expected: ens.dim(), got: u.len() });
    }
    if record >= ens.times().len() {
        return Err(Error::InvalidConfig(format!("record index {record} out of range")));
    }
    Ok(complex_mean((0..ens.n_paths()).map(|j| cdot_real(u, ens.state(j, record)).exp())))
}

/// Weak-error constant from a step-halving pair: `|m(dt) - m(dt/2)| / (dt/2)`.
pub fn weak_error_constant<T: Real>(coarse: C<T>, fine: C<T>, dt: T) -> T {
    (coarse - fine).norm() / (dt * T::lit(0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport<T> {
    pub checkpoint_times: Vec<T>,
    /// `|Ê M_{t_k} - M_0| / se(M_{t_k})` per checkpoint (0 at `t = 0`).
    pub standardized_drifts: Vec<T>,
    pub max_standardized_drift: T,
    /// Per checkpoint `|Ê^{dt} M_{t_k} - Ê^{2dt} M_{t_k}| / se`, the first-order
    /// discretization bias of the `dt` run in units of its standard error.
    /// Present only when the `2dt` run was requested.
    pub discretization_allowance: Option<Vec<T>>,
    pub max_allowance: Option<T>,
    pub m0: C<T>,
}

/// Checks that `M_t = exp(ψ₀(T-t,u) + ψ(T-t,u)ᵀX_t)` has constant mean over
/// `n_checkpoints` equally spaced times. With `bias_run`, a second ensemble at
/// `2dt` estimates the discretization bias.
pub fn martingale_diagnostic<T: Real>(
    model: &AffineModel<T>,
    u: &[C<T>],
    x0: &[T],
    horizon: T,
    n_checkpoints: usize,
    sim: &SimConfig<T>,
    solver: &SolverConfig<T>,
    bias_run: bool,
) -> Result<MartingaleReport<T>> {
    let sol = solve_riccati(model, u, horizon, solver)?;
    if let Verdict::Exploded { t_lo, t_hi } = sol.verdict() {
        return Err(Error::ExplosionBeforeHorizon {
            t_lo: t_lo.as_f64(),
            t_hi: t_hi.as_f64(),
            horizon: horizon.as_f64(),
        });
    }
    let cfg = SimConfig { horizon, n_records: n_checkpoints, ..sim.clone() };
    let coarse_cfg = SimConfig { dt: cfg.dt * T::lit(2.0), ..cfg.clone() };
    let fine = simulate_paths(model, x0, &cfg)?;
    let coarse = if bias_run { Some(simulate_paths(model, x0, &coarse_cfg)?) } else { None };

    let m_of = |ens: &PathEnsemble<T>, k: usize| -> McEstimate<T> {
        let t = ens.times()[k];
        let (psi0, psi) = sol.eval((horizon - t).max(T::zero())).expect("within solved horizon");
        complex_mean((0..ens.n_paths()).map(|j| (psi0 + cdot_real(&psi, ens.state(j, k))).exp()))
    };
    let (psi0, psi) = sol.terminal();
    let m0 = (psi0 + cdot_real(psi, x0)).exp();
    // With (numerically) identical samples, as at t = 0, the standard error is
    // rounding noise; the mean must then match to summation accuracy.
    let scale = T::one() + m0.norm();
    let ratio = |num: T, se: T| {
        if se > T::lit(1e-12) * scale {
            num / se
        } else if num <= T::lit(1e-9) * scale {
            T::zero()
        } else {
            T::infinity()
        }
    };

    let mut drifts = Vec::new();
    let mut allowance = Vec::new();
    for k in 0..fine.times().len() {
        let f = m_of(&fine, k);
        drifts.push(ratio((f.value - m0).norm(), f.std_error));
        if let Some(coarse) = &coarse {
            allowance.push(ratio((f.value - m_of(coarse, k).value).norm(), f.std_error));
        }
    }
    let max = |v: &[T]| v.iter().copied().fold(T::zero(), T::max);
    Ok(MartingaleReport {
        checkpoint_times: fine.times().to_vec(),
        max_standardized_drift: max(&drifts),
        max_allowance: coarse.as_ref().map(|_| max(&allowance)),
        standardized_drifts: drifts,
        discretization_allowance: coarse.map(|_| allowance),
        m0,
    })
}

/// Empirical `E sup_{t≤T} |X_t|²`.
pub fn sup_moment<T: Real>(ens: &PathEnsemble<T>) -> T {
    let n = T::from_usize(ens.n_paths()).expect("path count");
    ens.sup_sq().iter().copied().sum::<T>() / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupMomentProfile<T> {
    pub horizons: Vec<T>,
    pub moments: Vec<T>,
    /// `max log(m_{k+1}/m_k) / (T_{k+1} - T_k)`: the smallest `C` with `m ≤ m₀e^{C·ΔT}`.
    pub fitted_rate: T,
}

/// `E sup|X|²` over increasing horizons, for monitoring at-most-exponential growth.
pub fn sup_moment_profile<T: Real>(
    model: &AffineModel<T>,
    x0: &[T],
    horizons: &[T],
    sim: &SimConfig<T>,
) -> Result<SupMomentProfile<T>> {
    let mut moments = Vec::with_capacity(horizons.len());
    for h in horizons {
        let ens = simulate_paths(model, x0, &SimConfig { horizon: *h, ..sim.clone() })?;
        moments.push(sup_moment(&ens));
    }
    let mut fitted_rate = T::neg_infinity();
    for k in 1..horizons.len() {
        let r = (moments[k] / moments[k - 1]).ln() / (horizons[k] - horizons[k - 1]);
        fitted_rate = fitted_rate.max(r);
    }
    Ok(SupMomentProfile { horizons: horizons.to_vec(), moments, fitted_rate })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpCountCheck<T> {
    pub mean_jumps: T,
    pub mean_integrated_intensity: T,
    /// Standard error of the per-path difference `N - ∫Λ`.
    pub std_error: T,
}

/// Mean jump count against `Ê ∫₀ᵀ Λ(X_s) ds` on the same ensemble.
pub fn jump_count_check<T: Real>(ens: &PathEnsemble<T>) -> JumpCountCheck<T> {
    let n = T::from_usize(ens.n_paths()).expect("path count");
    let d: Vec<T> = ens
        .jump_counts()
        .iter()
        .zip(ens.integrated_intensity())
        .map(|(k, l)| T::from_u64(*k).expect("count") - *l)
        .collect();
    let mean_d = d.iter().copied().sum::<T>() / n;
    let var = d.iter().map(|v| (*v - mean_d) * (*v - mean_d)).sum::<T>() / (n - T::one()).max(T::one());
    let mean_jumps = ens.jump_counts().iter().map(|k| T::from_u64(*k).expect("count")).sum::<T>() / n;
    JumpCountCheck {
        mean_jumps,
        mean_integrated_intensity: ens.integrated_intensity().iter().copied().sum::<T>() / n,
        std_error: (var / n).sqrt(),
    }
}
