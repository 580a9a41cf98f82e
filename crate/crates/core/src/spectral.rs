//! Subspace estimation, projectors and the predictive-power coefficient.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite_matrix, Error, Result};
use crate::linalg::{fix_signs, max_abs, thin_qr};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// A `p × k` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    columns: DMatrix<f64>,
}

impl OrthonormalBasis {
    /// Validates `BᵀB = I` to 1e-10 in max-abs entry.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        ensure_finite_matrix("basis", &columns)?;
        let k = columns.ncols();
        if k > columns.nrows() {
            return Err(Error::Input(format!(
                "basis has {k} columns in dimension {}",
                columns.nrows()
            )));
        }
        let gram = columns.transpose() * &columns;
        let err = max_abs(&(gram - DMatrix::identity(k, k)));
        if err > ORTHONORMAL_TOL {
            return Err(Error::Input(format!(
                "basis columns are not orthonormal (max |BᵀB − I| = {err:e})"
            )));
        }
        Ok(Self { columns })
    }

    pub(crate) fn from_trusted(columns: DMatrix<f64>) -> Self {
        Self { columns }
    }

    /// Standard basis vectors `e_i` for the listed indices.
    pub fn coordinate(p: usize, indices: &[usize]) -> Result<Self> {
        let mut m = DMatrix::zeros(p, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            if i >= p {
                return Err(Error::Input(format!("coordinate {i} out of range for p = {p}")));
            }
            m[(i, j)] = 1.0;
        }
        Self::new(m)
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_columns(self) -> DMatrix<f64> {
        self.columns
    }

    /// Retained dimension `k`.
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// Ambient dimension `p`.
    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    /// The first `k` columns.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim() {
            return Err(Error::Dimension(format!(
                "cannot keep {k} of {} basis columns",
                self.dim()
            )));
        }
        Ok(Self::from_trusted(self.columns.columns(0, k).into_owned()))
    }

    /// Coordinates `Bᵀ x` of each column of `x`.
    pub fn coordinates(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.ambient_dim() {
            return Err(Error::Input(format!(
                "matrix has {} rows, basis lives in dimension {}",
                x.nrows(),
                self.ambient_dim()
            )));
        }
        Ok(self.columns.transpose() * x)
    }
}

/// Orthogonal projector `Π = BBᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: DMatrix<f64>,
}

impl Projector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Top-`r` left singular vectors of `x`, ordered by descending singular
/// value, each column signed so that its largest-magnitude entry is positive.
pub fn estimate_subspace(x: &DMatrix<f64>, r: usize) -> Result<OrthonormalBasis> {
    let (p, n) = x.shape();
    if r == 0 || r > p.min(n) {
        return Err(Error::Dimension(format!(
            "r = {r} must lie in 1..={} for a {p}×{n} matrix",
            p.min(n)
        )));
    }
    ensure_finite_matrix("X", x)?;
    // For wide inputs the left singular vectors of X are those of Rᵀ, where
    // Xᵀ = QR; this keeps the SVD square.
    let core = if n > 2 * p {
        let (_, rr) = thin_qr(&x.transpose());
        rr.transpose()
    } else {
        x.clone()
    };
    let svd = core.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Solver("SVD did not return left singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut cols = DMatrix::zeros(p, r);
    for (dst, &src) in order.iter().take(r).enumerate() {
        cols.set_column(dst, &u.column(src));
    }
    fix_signs(&mut cols);
    Ok(OrthonormalBasis::from_trusted(cols))
}

pub fn projector(b: &OrthonormalBasis) -> Projector {
    let c = b.columns();
    let mut matrix = c * c.transpose();
    // Symmetrize away round-off.
    matrix = (&matrix + matrix.transpose()) * 0.5;
    Projector { matrix }
}

/// `‖Π_B γ‖² / ‖γ‖²`.
pub fn predictive_power(gamma: &DVector<f64>, b: &OrthonormalBasis) -> Result<f64> {
    if gamma.len() != b.ambient_dim() {
        return Err(Error::Input(format!(
            "gamma has length {}, basis lives in dimension {}",
            gamma.len(),
            b.ambient_dim()
        )));
    }
    let total = gamma.norm_squared();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Input("gamma must be finite and nonzero".into()));
    }
    let coords = b.columns().transpose() * gamma;
    Ok((coords.norm_squared() / total).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_is_e1() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let mut x = DMatrix::zeros(3, 4);
        x.set_row(0, &(-v.transpose()));
        let b = estimate_subspace(&x, 1).unwrap();
        assert!((b.columns()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(b.columns()[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn projector_of_e1() {
        let b = OrthonormalBasis::coordinate(3, &[0]).unwrap();
        let pi = projector(&b);
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert_eq!(pi.matrix(), &expect);
    }

    #[test]
    fn half_power() {
        let g = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        let b = OrthonormalBasis::coordinate(2, &[0]).unwrap();
        assert!((predictive_power(&g, &b).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(estimate_subspace(&x, 3), Err(Error::Dimension(_))));
        let mut y = x.clone();
        y[(1, 1)] = f64::NAN;
        assert!(matches!(estimate_subspace(&y, 1), Err(Error::Input(_))));
        let nb = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(OrthonormalBasis::new(nb), Err(Error::Input(_))));
        let b = OrthonormalBasis::coordinate(3, &[0]).unwrap();
        assert!(predictive_power(&DVector::zeros(3), &b).is_err());
    }
}
