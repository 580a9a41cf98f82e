use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
pub(crate) fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Symmetric PSD square root; eigenvalues below `1e-12 · max` are set to zero.
pub(crate) fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen_desc(a);
    let floor = 1e-12 * values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
        let v = values[j];
        vectors[(i, j)] * if v > floor { v.sqrt() } else { 0.0 }
    });
    &scaled * vectors.transpose()
}

/// Minimum-norm least squares `argmin ‖A x − b‖` with singular values below
/// `1e-10 · σ_max` treated as zero.
pub(crate) fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::Input(format!(
            "design has {} rows but response has length {}",
            a.nrows(),
            b.len()
        )));
    }
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = a.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Solver("SVD did not return singular vectors".into())),
    };
    let smax = svd.singular_values.max();
    let cutoff = 1e-10 * smax;
    let utb = u.transpose() * b;
    let mut coef = DVector::zeros(svd.singular_values.len());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            coef[i] = utb[i] / s;
        }
    }
    Ok(vt.transpose() * coef)
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub(crate) fn spd_solve(a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match a.clone().cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => a
            .lu()
            .solve(b)
            .ok_or_else(|| Error::Solver("singular system in positive definite solve".into())),
    }
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Householder QR of a tall matrix, returning the thin factors `(Q, R)`.
pub(crate) fn thin_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.clone().qr();
    (qr.q(), qr.r())
}

/// Flips the sign of each column so its largest-magnitude entry is positive.
pub(crate) fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}
