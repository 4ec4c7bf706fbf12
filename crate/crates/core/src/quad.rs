//! Adaptive Simpson quadrature.

use crate::error::Result;
use crate::num::Real;

/// `∫_a^b f` to absolute tolerance `tol`, with Richardson correction on accepted panels.
pub fn adaptive_simpson<T, F>(mut f: F, a: T, b: T, tol: T, max_depth: u32) -> Result<T>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    if a == b {
        return Ok(T::zero());
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = (a + b) * T::lit(0.5);
    let fm = f(m)?;
    let whole = simpson(a, b, fa, fm, fb);
    recurse(&mut f, a, b, fa, fm, fb, whole, tol, max_depth)
}

fn simpson<T: Real>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T, F>(f: &mut F, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> Result<T>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    let half = T::lit(0.5);
    let m = (a + b) * half;
    let lm = (a + m) * half;
    let rm = (m + b) * half;
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return Ok(left + right + delta / T::lit(15.0));
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, tol * half, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, tol * half, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_smooth_and_peaked_functions() {
        let v = adaptive_simpson(|x: f64| Ok(x.sin()), 0.0, std::f64::consts::PI, 1e-12, 50).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
        // ∫₀^0.99 1/(1-s)² ds = 1/0.01 - 1 = 99
        let v = adaptive_simpson(|s: f64| Ok(1.0 / ((1.0 - s) * (1.0 - s))), 0.0, 0.99, 1e-9, 60).unwrap();
        assert!((v - 99.0).abs() < 1e-8);
    }
}
