//! Small helpers over `nalgebra` complex matrices.
//!
//! Everything in the crate works on dense `DMatrix<Complex64>`; diagonal
//! matrices that stay real (Bussgang gains) are carried as `&[f64]`.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Regularization added to a Gram matrix that fails its Cholesky factorization.
pub const REGULARIZATION: f64 = 1e-12;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Complex matrix with the given real diagonal.
pub fn diag_matrix(d: &[f64]) -> CMat {
    let n = d.len();
    CMat::from_fn(n, n, |i, j| if i == j { c64(d[i], 0.0) } else { C64::new(0.0, 0.0) })
}

/// Real parts of the diagonal of `m`.
pub fn real_diag(m: &CMat) -> Vec<f64> {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).collect()
}

/// `diag(m)` as a matrix: off-diagonal entries zeroed.
pub fn diag_part(m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| if i == j { m[(i, j)] } else { C64::new(0.0, 0.0) })
}

/// `diag(d) * m`.
pub fn scale_rows(d: &[f64], m: &CMat) -> CMat {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= C64::new(d[i], 0.0);
    }
    out
}

/// `m * diag(d)`.
pub fn scale_cols(m: &CMat, d: &[f64]) -> CMat {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= C64::new(d[j], 0.0);
    }
    out
}

/// `(m + m^H) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).iter().all(|z| z.norm() <= tol)
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
///
/// Returns `None` when the Cholesky factorization fails.
pub fn logdet_hpd(m: &CMat) -> Option<f64> {
    let chol = hermitize(m).cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Log-determinant with a `REGULARIZATION * I` fallback. The flag reports
/// whether the fallback was needed.
pub fn logdet_hpd_regularized(m: &CMat) -> (f64, bool) {
    match logdet_hpd(m) {
        Some(v) => (v, false),
        None => {
            let reg = m + identity(m.nrows()) * c64(REGULARIZATION, 0.0);
            (logdet_hpd(&reg).unwrap_or(f64::NEG_INFINITY), true)
        }
    }
}

/// Solves `a x = b` for Hermitian positive-definite `a`, regularizing once if
/// the factorization fails.
pub fn solve_hpd(a: &CMat, b: &CMat) -> (CMat, bool) {
    if let Some(chol) = hermitize(a).cholesky() {
        return (chol.solve(b), false);
    }
    let reg = hermitize(a) + identity(a.nrows()) * c64(REGULARIZATION, 0.0);
    match reg.clone().cholesky() {
        Some(chol) => (chol.solve(b), true),
        None => {
            let x = reg.lu().solve(b).unwrap_or_else(|| CMat::zeros(b.nrows(), b.ncols()));
            (x, true)
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix: (eigenvalues, eigenvectors).
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitize(m).symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Rank of `m` estimated from its singular values, relative tolerance `rtol`.
pub fn numerical_rank(m: &CMat, rtol: f64) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_of_diagonal() {
        let m = diag_matrix(&[2.0, 3.0, 0.5]);
        let v = logdet_hpd(&m).unwrap();
        assert!((v - (3.0f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn singular_gram_is_regularized() {
        let m = diag_matrix(&[1.0, 0.0]);
        let (v, flagged) = logdet_hpd_regularized(&m);
        assert!(flagged);
        assert!((v - REGULARIZATION.ln()).abs() < 1e-6);
    }

    #[test]
    fn row_and_column_scaling() {
        let m = CMat::from_element(2, 2, c64(1.0, 1.0));
        let r = scale_rows(&[2.0, 3.0], &m);
        let c = scale_cols(&m, &[2.0, 3.0]);
        assert_eq!(r[(1, 0)], c64(3.0, 3.0));
        assert_eq!(c[(0, 1)], c64(3.0, 3.0));
    }
}
