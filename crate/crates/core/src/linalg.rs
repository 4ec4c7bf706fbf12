//! Small dense linear algebra on `DMatrix<T>`.
//!
//! Eigen-decompositions and the matrix exponential are delegated to nalgebra in
//! `f64` and converted back, so the generic scalar only needs `num_traits`
//! arithmetic. Matrices here are at most a few dozen rows.

use nalgebra::DMatrix;

use crate::num::Real;

pub(crate) fn to_f64<T: Real>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|v| v.as_f64())
}

pub(crate) fn from_f64<T: Real>(m: &DMatrix<f64>) -> DMatrix<T> {
    m.map(T::lit)
}

/// Largest entrywise asymmetry `|m_ij - m_ji|`.
pub fn asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues (ascending) and eigenvectors (as columns, same order) of a symmetric matrix.
pub fn sym_eigen<T: Real>(m: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let eig = to_f64(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| T::lit(eig.eigenvalues[i])).collect();
    let n = m.nrows();
    let vectors = DMatrix::from_fn(n, n, |r, c| T::lit(eig.eigenvectors[(r, order[c])]));
    (values, vectors)
}

pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    sym_eigen(m).0.first().copied().unwrap_or_else(T::zero)
}

/// Square-root factor `L` with `L Lᵀ = m` for a symmetric positive semi-definite `m`.
///
/// Tries a plain Cholesky first; on failure falls back to an eigen-decomposition
/// with negative eigenvalues clipped to zero. Returns `Err(min_eigenvalue)` if an
/// eigenvalue lies below `-clip_tol`.
pub fn psd_sqrt<T: Real>(m: &DMatrix<T>, clip_tol: T) -> Result<DMatrix<T>, T> {
    let n = m.nrows();
    if n == 1 {
        let v = m[(0, 0)];
        if v < -clip_tol {
            return Err(v);
        }
        return Ok(DMatrix::from_element(1, 1, v.max(T::zero()).sqrt()));
    }
    if let Some(l) = cholesky(m) {
        return Ok(l);
    }
    let (values, vectors) = sym_eigen(m);
    if values[0] < -clip_tol {
        return Err(values[0]);
    }
    let mut factor = vectors;
    for (c, lambda) in values.iter().enumerate() {
        let s = lambda.max(T::zero()).sqrt();
        for r in 0..n {
            factor[(r, c)] *= s;
        }
    }
    Ok(factor)
}

/// Lower-triangular Cholesky factor, `None` unless `m` is numerically positive definite.
pub fn cholesky<T: Real>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

pub fn expm<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    from_f64(&to_f64(m).exp())
}

/// Matrix-vector product `m x`.
pub fn matvec<T: Real>(m: &DMatrix<T>, x: &[T]) -> Vec<T> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * x[c]).sum())
        .collect()
}

/// Dimension of the scaled half-vectorization of a `d × d` symmetric matrix.
pub const fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Inverse of [`svec_len`], if `p` is a triangular number.
pub fn svec_order(p: usize) -> Option<usize> {
    (1..=p).find(|d| svec_len(*d) == p)
}

/// Upper triangle of a symmetric matrix stacked row by row, off-diagonal entries
/// scaled by √2 so that `svec(X)·svec(Y) = tr(XY)`.
pub fn svec<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(svec_len(d));
    for i in 0..d {
        for j in i..d {
            if i == j {
                out.push(m[(i, i)]);
            } else {
                out.push(m[(i, j)] * T::SQRT_2());
            }
        }
    }
    out
}

pub fn unsvec<T: Real>(x: &[T], d: usize) -> DMatrix<T> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            if i == j {
                m[(i, i)] = x[k];
            } else {
                let v = x[k] / T::SQRT_2();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            k += 1;
        }
    }
    m
}

/// Determinant via LU in `f64`.
pub fn det<T: Real>(m: &DMatrix<T>) -> T {
    T::lit(to_f64(m).determinant())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trip_and_trace_inner_product() {
        let x = DMatrix::<f64>::from_row_slice(3, 3, &[2.0, 0.3, -1.0, 0.3, 1.5, 0.25, -1.0, 0.25, 4.0]);
        let y = DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 0.2, -0.5, 3.0, 0.0, 0.2, 0.0, 0.7]);
        let back = unsvec(&svec(&x), 3);
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        let tr = (&x * &y).trace();
        let ip: f64 = svec(&x).iter().zip(svec(&y)).map(|(a, b)| a * b).sum();
        assert!((tr - ip).abs() < 1e-13);
    }

    #[test]
    fn psd_sqrt_clips_semidefinite_and_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = psd_sqrt(&m, 1e-10).unwrap();
        let back = &l * l.transpose();
        assert!((back - m).abs().max() < 1e-12);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-6]);
        assert!(psd_sqrt(&bad, 1e-10).is_err());
    }

    #[test]
    fn svec_order_inverts_length() {
        assert_eq!(svec_order(3), Some(2));
        assert_eq!(svec_order(6), Some(3));
        assert_eq!(svec_order(4), None);
    }
}
