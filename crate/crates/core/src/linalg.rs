//! Small dense complex linear-algebra helpers shared by the modules.
//!
//! The hot per-tone kernel has its own allocation-free routines in
//! `tonesolver::kernel`; everything here works on `nalgebra` matrices and is
//! meant for setup, validation and reporting paths.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const LN_2: f64 = std::f64::consts::LN_2;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Real part of the trace.
pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Rebuilds `V diag(values) Vᴴ`.
pub fn from_eigen(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= v;
        }
    }
    &scaled * vectors.adjoint()
}

/// `log2 det(m)` for a Hermitian positive definite matrix, via Cholesky.
pub fn log2_det_hpd(m: &CMatrix) -> Result<f64> {
    let n = m.nrows();
    let chol = hermitian_part(m)
        .cholesky()
        .ok_or_else(|| Error::NotPd(format!("{n}x{n} log-det argument")))?;
    let l = chol.l_dirty();
    let ln_det: f64 = (0..n).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
    Ok(ln_det / LN_2)
}

/// Checks Hermitian symmetry and positive semidefiniteness with the
/// tolerances used for covariance matrices.
pub fn check_covariance(m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::validation(format!("{what}: not square")));
    }
    if !is_finite(m) {
        return Err(Error::NotPsd(format!("{what}: non-finite entry")));
    }
    let scale = max_abs(m);
    let asym = max_abs(&(m - m.adjoint()));
    if asym > 1e-10 * (1.0 + scale) {
        return Err(Error::NotPsd(format!(
            "{what}: not Hermitian (asymmetry {asym:e})"
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(());
    }
    let (values, _) = hermitian_eigen(m);
    // Round-off floor for near-zero matrices where the trace bound vanishes.
    let floor = -(1e-9 * trace_re(m).max(0.0) / n as f64).max(1e-15 * scale);
    if values[0] < floor {
        return Err(Error::NotPsd(format!(
            "{what}: minimum eigenvalue {:e}",
            values[0]
        )));
    }
    Ok(())
}

/// `m^{-1/2}` for a Hermitian positive definite matrix. Fails when the
/// smallest eigenvalue is not above `1e-12` times the largest.
pub fn inv_sqrt_hpd(m: &CMatrix) -> Result<CMatrix> {
    let (values, vectors) = hermitian_eigen(m);
    let max = values.last().copied().unwrap_or(0.0);
    let min = values.first().copied().unwrap_or(0.0);
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::NotPd(format!("eigenvalues in [{min:e}, {max:e}]")));
    }
    let inv: Vec<f64> = values.iter().map(|v| 1.0 / v.sqrt()).collect();
    Ok(from_eigen(&inv, &vectors))
}
