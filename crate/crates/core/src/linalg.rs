//! Dense complex linear algebra helpers built on `nalgebra`.
//!
//! Every log-determinant goes through a Cholesky factor of a Hermitian
//! positive-definite matrix; explicit determinant products are never formed.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use nalgebra::{Cholesky, Complex, DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Gram condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn cholesky(m: &CMat) -> Result<Cholesky<C64, nalgebra::Dyn>> {
    Cholesky::new(hermitian_part(m))
        .ok_or_else(|| Error::Numerical("matrix is not Hermitian positive definite".into()))
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub fn ln_det_hpd(m: &CMat) -> Result<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    Ok((0..m.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Base-2 log-determinant of a Hermitian positive-definite matrix.
pub fn log2_det_hpd(m: &CMat) -> Result<f64> {
    Ok(ln_det_hpd(m)? / LN_2)
}

/// Inverse of a Hermitian positive-definite matrix, re-symmetrized.
pub fn inverse_hpd(m: &CMat) -> Result<CMat> {
    Ok(hermitian_part(&cholesky(m)?.inverse()))
}

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// Each eigenvector is rotated so that its largest-magnitude component is
/// real and positive (the first such component on ties).
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].norm() > col[pivot].norm() * (1.0 + 1e-12) {
                pivot = i;
            }
        }
        let p = col[pivot];
        let phase = if p.norm() > 0.0 { p.conj() / p.norm() } else { real(1.0) };
        vectors.set_column(dst, &(col * phase));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut values: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Eigenvalues in `[-1e-12 * scale, 0)` are clamped to zero; anything more
/// negative is rejected.
pub fn sqrtm_psd(m: &CMat) -> Result<CMat> {
    let (values, vectors) = hermitian_eigen(m);
    let scale = values.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let mut roots = Vec::with_capacity(values.len());
    for v in values {
        if v < -1e-12 * scale {
            return Err(Error::Validation(format!(
                "matrix is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        roots.push(real(v.max(0.0).sqrt()));
    }
    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(roots));
    Ok(hermitian_part(&(&vectors * d * vectors.adjoint())))
}

/// Errors with [`Error::NumericalRank`] when `cond(gram) > MAX_CONDITION`.
pub fn check_conditioning(gram: &CMat) -> Result<()> {
    let values = hermitian_eigenvalues(gram);
    let (lo, hi) = (values[0], values[values.len() - 1]);
    if lo <= 0.0 || hi / lo > MAX_CONDITION {
        let condition = if lo <= 0.0 { f64::INFINITY } else { hi / lo };
        return Err(Error::NumericalRank { condition });
    }
    Ok(())
}

/// Relative Hermitian defect `||m - m^H||_F / max(||m||_F, 1)`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).norm() / m.norm().max(1.0)
}

pub fn block_diagonal(blocks: &[CMat]) -> CMat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Matrix of i.i.d. CN(0, 1) entries: real and imaginary parts each N(0, 1/2).
/// Entries are drawn in column-major order.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(i, j)] = C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2);
        }
    }
    m
}

/// Haar-distributed unitary matrix (QR of a Gaussian matrix with the phases
/// of `diag(R)` removed).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let qr = complex_gaussian(n, n, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            let scaled = q.column(j) * phase;
            q.set_column(j, &scaled);
        }
    }
    q
}
