//! Small complex linear-algebra helpers shared by the design modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Hermitian tolerance used when validating user-supplied covariances.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues in `(-PSD_CLAMP, 0)` are treated as round-off and clamped.
pub const PSD_CLAMP: f64 = 1e-10;
/// Reciprocal condition estimate below which a Hermitian system is singular.
pub const RCOND_MIN: f64 = 1e-13;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Real trace of a matrix that is Hermitian up to round-off.
pub fn re_trace(m: &CMat) -> f64 {
    m.trace().re
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn symmetrize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Eigenvalues in `(-1e-10, 0)` are clamped to zero; anything more negative
/// is rejected, as is an input that is not Hermitian within `1e-10`.
pub fn hermitian_sqrt(m: &CMat) -> Result<CMat> {
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(Error::Domain(format!("matrix square root needs a Hermitian input (defect {defect:.3e})")));
    }
    let (values, vectors) = hermitian_eigen(m);
    let mut roots = Vec::with_capacity(values.len());
    for &v in &values {
        if v < -PSD_CLAMP {
            return Err(Error::Domain(format!("matrix square root needs a PSD input (eigenvalue {v:.3e})")));
        }
        roots.push(c(v.max(0.0).sqrt()));
    }
    let scaled = CMat::from_fn(vectors.nrows(), vectors.ncols(), |r, col| vectors[(r, col)] * roots[col]);
    Ok(symmetrize(&(scaled * vectors.adjoint())))
}

/// Cholesky factor of a Hermitian PD matrix with a cheap conditioning gate.
///
/// The reciprocal condition estimate is `(min diag L / max diag L)^2`.
pub fn hermitian_factor(m: &CMat) -> Option<Cholesky<C64, Dyn>> {
    let chol = Cholesky::new(symmetrize(m))?;
    let diag = chol.l_dirty().diagonal();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for d in diag.iter() {
        lo = lo.min(d.re);
        hi = hi.max(d.re);
    }
    if hi <= 0.0 || (lo / hi).powi(2) < RCOND_MIN {
        return None;
    }
    Some(chol)
}

/// Solves `M X = rhs` for Hermitian PD `M`.
pub fn hermitian_solve(m: &CMat, rhs: &CMat) -> Option<CMat> {
    hermitian_factor(m).map(|chol| chol.solve(rhs))
}

/// Squared Euclidean norm of column `j`.
pub fn col_norm_sqr(m: &CMat, j: usize) -> f64 {
    m.column(j).norm_squared()
}

/// `x^H M x` for a Hermitian `M`, real part only.
pub fn quad_form(m: &CMat, x: &CVec) -> f64 {
    (x.adjoint() * m * x)[(0, 0)].re
}

/// Horizontally stacks blocks with equal row counts.
pub fn hstack(blocks: &[CMat], rows: usize) -> CMat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Frobenius norm of `a - b` relative to `max(1, ||b||)`.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(rows: usize, cols: usize, data: &[f64]) -> CMat {
        CMat::from_row_slice(rows, cols, &data.iter().map(|&x| c(x)).collect::<Vec<_>>())
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i3 = identity(3);
        assert!(rel_diff(&hermitian_sqrt(&i3).unwrap(), &i3) < 1e-14);
        let d = real(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let s = hermitian_sqrt(&d).unwrap();
        assert!(rel_diff(&s, &real(2, 2, &[2.0, 0.0, 0.0, 3.0])) < 1e-14);
    }

    #[test]
    fn sqrt_squares_back_on_complex_input() {
        let a = CMat::from_fn(3, 3, |i, j| C64::new((i + 2 * j) as f64 * 0.3, (i as f64) - (j as f64)));
        let m = &a * a.adjoint();
        let s = hermitian_sqrt(&m).unwrap();
        assert!((&s * &s - &m).norm() / m.norm() < 1e-10);
        assert!(hermitian_defect(&s) < 1e-12);
    }

    #[test]
    fn sqrt_clamps_round_off_and_rejects_indefinite() {
        let tiny = real(2, 2, &[1.0, 0.0, 0.0, -5e-11]);
        let s = hermitian_sqrt(&tiny).unwrap();
        assert_eq!(s[(1, 1)].re, 0.0);
        let bad = real(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(matches!(hermitian_sqrt(&bad), Err(Error::Domain(_))));
        let skew = real(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(hermitian_sqrt(&skew), Err(Error::Domain(_))));
    }

    #[test]
    fn factor_rejects_singular() {
        let sing = real(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(hermitian_factor(&sing).is_none());
        assert!(hermitian_factor(&identity(2)).is_some());
    }
}
