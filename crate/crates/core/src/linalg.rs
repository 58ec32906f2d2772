//! Thin dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Thin SVD `M = U diag(s) Vᵀ` with singular values sorted in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v_t: Matrix,
}

/// Computes the thin SVD of `m`.
///
/// The decomposition itself comes from `faer`: `nalgebra`'s implicit-shift
/// SVD can return factors that do not reproduce rank-deficient input.
/// An empty matrix yields empty factors. Non-finite input or failure to
/// converge is reported as a numerical error rather than a panic.
pub fn svd(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        let k = rows.min(cols);
        return Ok(Svd {
            u: Matrix::zeros(rows, k),
            singular_values: Vector::zeros(k),
            v_t: Matrix::zeros(k, cols),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "SVD input contains non-finite entries".into(),
        ));
    }
    let dec = faer::Mat::from_fn(rows, cols, |i, j| m[(i, j)])
        .thin_svd()
        .map_err(|e| {
            Error::Numerical(format!(
                "SVD of {rows}x{cols} matrix did not converge: {e:?}"
            ))
        })?;
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    let k = rows.min(cols);
    Ok(Svd {
        u: Matrix::from_fn(rows, k, |i, j| u[(i, j)]),
        singular_values: Vector::from_fn(k, |i, _| s[i]),
        v_t: Matrix::from_fn(k, cols, |i, j| v[(j, i)]),
    })
}

/// Singular values only, descending.
pub fn singular_values(m: &Matrix) -> Result<Vector> {
    Ok(svd(m)?.singular_values)
}

impl Svd {
    /// Number of singular values strictly above `tol * sigma_max`.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        let smax = self.singular_values.iter().cloned().fold(0.0, f64::max);
        if smax == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s > tol * smax)
            .count()
    }

    /// Leading `k` left singular vectors as columns.
    pub fn leading_left(&self, k: usize) -> Matrix {
        self.u.columns(0, k).into_owned()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * &self.v_t
    }
}

/// Orthonormal basis for the column space of `m`, dropping directions whose
/// singular value is at most `tol * sigma_max`.
pub fn column_space_basis(m: &Matrix, tol: f64) -> Result<Matrix> {
    let dec = svd(m)?;
    let r = dec.numerical_rank(tol);
    Ok(dec.leading_left(r))
}

/// Orthogonal projector `U Uᵀ` onto the span of the orthonormal columns of `u`.
pub fn projector(u: &Matrix) -> Matrix {
    u * u.transpose()
}
