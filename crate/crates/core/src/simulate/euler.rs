//! One Euler step of the compensated jump-diffusion, with buffers reused
//! across steps of a path.

use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::model::{AffineModel, JumpComponent, SpaceKind, StateSpace};
use crate::num::Real;
use crate::rng::CounterRng;
use nalgebra::DMatrix;

/// Model coefficients laid out for stepping.
#[derive(Debug, Clone)]
pub(crate) struct Stepper<T> {
    p: usize,
    /// `b(x) - ∫z K(x,dz)`: constant part and columns, row-major `p × p`.
    drift0: Vec<T>,
    drift: Vec<T>,
    /// `A⁰, .., Aᵖ`, each row-major `p × p`.
    diffusion: Vec<Vec<T>>,
    diffusion_active: Vec<bool>,
    components: Vec<JumpComponent<T>>,
    weights: Vec<Vec<T>>,
    space: StateSpace<T>,
    clip_tol: T,
}

/// Scratch space for one path.
pub(crate) struct Scratch<T> {
    c: Vec<T>,
    l: Vec<T>,
    xi: Vec<T>,
    next: Vec<T>,
    intensities: Vec<T>,
    /// Matrix form of a PSD-cone state, for the membership test.
    mat: Vec<T>,
}

impl<T: Real> Stepper<T> {
    pub(crate) fn new(model: &AffineModel<T>, clip_tol: T) -> Result<Self> {
        let p = model.dim();
        let mut drift0 = model.a0().to_vec();
        let mut drift = vec![T::zero(); p * p];
        let jumps = model.jumps();
        for (r, v) in jumps[0].mean_jump(p).into_iter().enumerate() {
            drift0[r] -= v;
        }
        for c in 0..p {
            let mj = jumps[c + 1].mean_jump(p);
            for r in 0..p {
                drift[r * p + c] = model.a()[(r, c)] - mj[r];
            }
        }
        let diffusion: Vec<Vec<T>> = model
            .diffusion()
            .iter()
            .map(|m| (0..p * p).map(|k| m[(k / p, k % p)]).collect())
            .collect();
        let diffusion_active = diffusion.iter().map(|m| m.iter().any(|v| *v != T::zero())).collect();
        let combined = model.combined_jumps();
        for w in &combined.weights {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntensityInfinite);
            }
        }
        Ok(Self {
            p,
            drift0,
            drift,
            diffusion,
            diffusion_active,
            components: combined.components,
            weights: combined.weights,
            space: model.space().clone(),
            clip_tol,
        })
    }

    pub(crate) fn scratch(&self) -> Scratch<T> {
        let p = self.p;
        Scratch {
            c: vec![T::zero(); p * p],
            l: vec![T::zero(); p * p],
            xi: vec![T::zero(); p],
            next: vec![T::zero(); p],
            intensities: vec![T::zero(); self.components.len()],
            mat: Vec::new(),
        }
    }

    /// Total jump intensity `K(x, F)`, with negative combined weights read as 0.
    pub(crate) fn intensity(&self, x: &[T], s: &mut Scratch<T>) -> T {
        let mut total = T::zero();
        for (k, w) in self.weights.iter().enumerate() {
            let mut v = w[0];
            for (xi, wi) in x.iter().zip(&w[1..]) {
                v += *xi * *wi;
            }
            let v = v.max(T::zero());
            s.intensities[k] = v;
            total += v;
        }
        total
    }

    /// Advances `x` by `dt`; returns the number of jumps and the left-point intensity.
    pub(crate) fn step(&self, x: &mut [T], dt: T, sqrt_dt: T, rng: &mut CounterRng, s: &mut Scratch<T>) -> Result<(u32, T)> {
        if self.p == 1 {
            return self.step_scalar(x, dt, sqrt_dt, rng, s);
        }
        let p = self.p;
        for r in 0..p {
            let mut v = self.drift0[r];
            for c in 0..p {
                v += self.drift[r * p + c] * x[c];
            }
            s.next[r] = x[r] + v * dt;
        }
        if self.diffusion_factor(x, s)? {
            for v in s.xi.iter_mut() {
                *v = T::lit(StandardNormal.sample(rng));
            }
            for r in 0..p {
                // `l` is a full (non-triangular) factor after eigen clipping.
                let mut v = T::zero();
                for c in 0..p {
                    v += s.l[r * p + c] * s.xi[c];
                }
                s.next[r] += v * sqrt_dt;
            }
        }
        let (jumps, lambda) = self.jumps(x, dt, rng, s)?;
        if self.inside(s) {
            x.copy_from_slice(&s.next);
        } else {
            let q = self.space.project(&s.next);
            x.copy_from_slice(&q);
        }
        Ok((jumps, lambda))
    }

    fn step_scalar(&self, x: &mut [T], dt: T, sqrt_dt: T, rng: &mut CounterRng, s: &mut Scratch<T>) -> Result<(u32, T)> {
        let x0 = x[0];
        let mut next = x0 + (self.drift0[0] + self.drift[0] * x0) * dt;
        let c = self.diffusion[0][0] + self.diffusion[1][0] * x0;
        if c > T::zero() {
            let xi: f64 = StandardNormal.sample(rng);
            next += c.sqrt() * sqrt_dt * T::lit(xi);
        } else if c < -self.clip_tol * (T::one() + c.abs()) {
            return Err(Error::CholeskyFailure(c.as_f64()));
        }
        s.next[0] = next;
        let (jumps, lambda) = self.jumps(x, dt, rng, s)?;
        let next = s.next[0];
        x[0] = match self.space.kind() {
            SpaceKind::Canonical { m: 1 } => next.max(T::zero()),
            SpaceKind::Canonical { .. } => next,
            _ => self.space.project(&s.next)[0],
        };
        Ok((jumps, lambda))
    }

    /// Adds the jumps of one step to `s.next`.
    fn jumps(&self, x: &[T], dt: T, rng: &mut CounterRng, s: &mut Scratch<T>) -> Result<(u32, T)> {
        if self.components.is_empty() {
            return Ok((0, T::zero()));
        }
        let lambda = self.intensity(x, s);
        if !(lambda > T::zero()) {
            return Ok((0, T::zero()));
        }
        if !lambda.is_finite() {
            return Err(Error::IntensityInfinite);
        }
        let n = poisson((lambda * dt).as_f64(), rng);
        for _ in 0..n {
            let k = self.pick(lambda, s, rng);
            match &self.components[k] {
                JumpComponent::Atom(z) => {
                    for (o, zi) in s.next.iter_mut().zip(z) {
                        *o += *zi;
                    }
                }
                JumpComponent::Ray { rate, direction } => {
                    let e: f64 = Exp1.sample(rng);
                    let len = T::lit(e) / *rate;
                    for (o, d) in s.next.iter_mut().zip(direction) {
                        *o += len * *d;
                    }
                }
            }
        }
        Ok((n as u32, lambda))
    }

    fn pick(&self, lambda: T, s: &Scratch<T>, rng: &mut CounterRng) -> usize {
        let target = T::lit(rng.open01()) * lambda;
        let mut acc = T::zero();
        for (k, w) in s.intensities.iter().enumerate() {
            acc += *w;
            if target < acc {
                return k;
            }
        }
        // Rounding left `target` at the top; take the last charged component.
        s.intensities.iter().rposition(|w| *w > T::zero()).unwrap_or(0)
    }

    /// Fills `s.l` with a square-root factor of `c(x)`; `false` when `c(x) = 0`.
    fn diffusion_factor(&self, x: &[T], s: &mut Scratch<T>) -> Result<bool> {
        let p = self.p;
        s.c.copy_from_slice(&self.diffusion[0]);
        for (i, xi) in x.iter().enumerate() {
            if self.diffusion_active[i + 1] && *xi != T::zero() {
                for (c, a) in s.c.iter_mut().zip(&self.diffusion[i + 1]) {
                    *c += *xi * *a;
                }
            }
        }
        if s.c.iter().all(|v| *v == T::zero()) {
            return Ok(false);
        }
        if cholesky_in_place(&s.c, &mut s.l, p) {
            return Ok(true);
        }
        let scale = T::one() + s.c.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let m = DMatrix::from_row_slice(p, p, &s.c);
        let f = psd_sqrt(&m, self.clip_tol * scale).map_err(|v| Error::CholeskyFailure(v.as_f64()))?;
        for r in 0..p {
            for c in 0..p {
                s.l[r * p + c] = f[(r, c)];
            }
        }
        Ok(true)
    }

    /// Whether `s.next` lies in the space; avoids an eigen-decomposition for the PSD cone.
    fn inside(&self, s: &mut Scratch<T>) -> bool {
        let x = &s.next;
        match self.space.kind() {
            SpaceKind::Canonical { m } => x[..*m].iter().all(|v| *v >= T::zero()),
            SpaceKind::PsdCone { d } => {
                let d = *d;
                s.mat.resize(d * d, T::zero());
                let mut k = 0;
                for i in 0..d {
                    s.mat[i * d + i] = x[k];
                    k += 1;
                    for j in i + 1..d {
                        let v = x[k] / T::SQRT_2();
                        s.mat[i * d + j] = v;
                        s.mat[j * d + i] = v;
                        k += 1;
                    }
                }
                ldl_positive(&mut s.mat, d)
            }
            _ => self.space.margin(x) >= T::zero(),
        }
    }
}

/// Whether a row-major symmetric `n × n` matrix is positive definite, by
/// Gaussian elimination in place (no square roots).
fn ldl_positive<T: Real>(m: &mut [T], n: usize) -> bool {
    for j in 0..n {
        let d = m[j * n + j];
        if !(d > T::zero()) {
            return false;
        }
        for i in j + 1..n {
            let f = m[i * n + j] / d;
            // Only the lower triangle is kept current.
            for k in j + 1..=i {
                let v = m[k * n + j];
                m[i * n + k] -= f * v;
            }
        }
    }
    true
}

/// Lower Cholesky factor of a row-major `n × n` matrix; `false` unless positive definite.
fn cholesky_in_place<T: Real>(m: &[T], l: &mut [T], n: usize) -> bool {
    for v in l.iter_mut() {
        *v = T::zero();
    }
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > T::zero()) {
            return false;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut v = m[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / d;
        }
    }
    true
}

/// Poisson variate: CDF inversion for small means, `rand_distr` otherwise.
fn poisson(mean: f64, rng: &mut CounterRng) -> u64 {
    if mean < 30.0 {
        let u = rng.open01();
        let mut k = 0u64;
        let mut prob = (-mean).exp();
        let mut cdf = prob;
        while u > cdf && k < 1000 {
            k += 1;
            prob *= mean / k as f64;
            cdf += prob;
        }
        k
    } else {
        let d = Poisson::new(mean).expect("positive finite mean");
        let v: f64 = d.sample(rng);
        v as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elimination_test_matches_eigenvalues() {
        let mut rng = CounterRng::new(5, 0, 0);
        for _ in 0..200 {
            let n = 3;
            let b: Vec<f64> = (0..n * n).map(|_| rng.open01() * 2.0 - 1.0).collect();
            let shift = rng.open01() * 1.5 - 0.5;
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum::<f64>() + if i == j { shift } else { 0.0 };
                }
            }
            let min_eig = DMatrix::from_row_slice(n, n, &m).symmetric_eigenvalues().min();
            if min_eig.abs() > 1e-9 {
                assert_eq!(ldl_positive(&mut m.clone(), n), min_eig > 0.0);
            }
        }
    }

    #[test]
    fn poisson_inversion_matches_moments() {
        let mut rng = CounterRng::new(11, 0, 0);
        for mean in [0.002, 0.7, 4.0, 55.0] {
            let n = 200_000;
            let mut s = 0.0;
            let mut s2 = 0.0;
            for i in 0..n {
                rng.seek(0, i);
                let k = poisson(mean, &mut rng) as f64;
                s += k;
                s2 += k * k;
            }
            let m = s / n as f64;
            let var = s2 / n as f64 - m * m;
            let se = (mean / n as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "mean {mean}: {m}");
            assert!((var - mean).abs() < 0.05 * mean + 10.0 * se, "var {mean}: {var}");
        }
    }

    #[test]
    fn cholesky_factor_reproduces_matrix() {
        let m = [4.0, 2.0, 0.4, 2.0, 3.0, 0.1, 0.4, 0.1, 2.0];
        let mut l = [0.0; 9];
        assert!(cholesky_in_place(&m, &mut l, 3));
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|k| l[r * 3 + k] * l[c * 3 + k]).sum();
                assert!((v - m[r * 3 + c]).abs() < 1e-14);
            }
        }
        assert!(!cholesky_in_place(&[1.0, 2.0, 2.0, 1.0], &mut [0.0; 4], 2));
    }
}
