//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative floor for positive definiteness: the minimum eigenvalue must
/// exceed this fraction of the mean eigenvalue (trace / dimension).
pub const PD_RELATIVE_FLOOR: f64 = 1e-12;

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Scale-aware positive-definiteness test used for every covariance and
/// objective matrix that must be strictly PD.
pub fn is_pd(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n == 0 {
        return true;
    }
    let floor = PD_RELATIVE_FLOOR * (m.trace() / n as f64);
    min_eigenvalue(m) > floor.max(0.0) && m.trace() > 0.0
}

pub fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dims(name, format!("{n}x{n}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

pub fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1e-300);
    let asym = max_asymmetry(m);
    if asym > 1e-9 * scale {
        return Err(Error::NotSymmetric { name: name.to_string(), asymmetry: asym });
    }
    Ok(())
}

pub fn check_pd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(name, m)?;
    if !is_pd(m) {
        return Err(Error::NotPositiveDefinite {
            name: name.to_string(),
            min_eigenvalue: min_eigenvalue(m),
        });
    }
    Ok(())
}

/// PSD check with a tolerance relative to the spectral scale.
pub fn check_psd(name: &str, m: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    check_symmetric(name, m)?;
    let ev = sym_eigenvalues(m);
    let (Some(&lo), Some(&hi)) = (ev.first(), ev.last()) else {
        return Ok(());
    };
    let scale = hi.abs().max(lo.abs());
    if lo < -rel_tol * scale {
        return Err(Error::NotPositiveDefinite { name: name.to_string(), min_eigenvalue: lo });
    }
    Ok(())
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// A matrix square root `S` with `S Sᵀ = m` for symmetric PSD `m`.
/// Uses Cholesky when possible, otherwise a clipped eigendecomposition.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.iter().all(|&v| v == 0.0) {
        return DMatrix::zeros(m.nrows(), m.ncols());
    }
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Solve `a x = b` for symmetric PD `a`, falling back to LU.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

pub fn spd_solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_diag_places_blocks() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::identity(2, 2);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(1, 1)], 1.0);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn psd_factor_reproduces_singular_matrix() {
        let v = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let m = &v * v.transpose();
        let s = psd_factor(&m);
        assert!((&s * s.transpose() - &m).norm() < 1e-12);
    }

    #[test]
    fn pd_test_is_scale_aware() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1e-20, 2e-20]));
        assert!(is_pd(&m));
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]));
        assert!(!is_pd(&s));
    }

    #[test]
    fn vec_round_trip() {
        let m = DMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        assert_eq!(unvec(&vec_of(&m), 3, 2), m);
        assert_eq!(vec_of(&m)[1], m[(1, 0)]);
    }
}
