//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`, which stores data
//! column-major. `vec(X)` therefore stacks columns, and the identity
//! `vec(A X B) = (B' ⊗ A) vec(X)` holds with nalgebra's `kronecker`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SlqrError};

/// Real symmetric matrix.
///
/// Construction symmetrizes the input as `(M + M')/2` and keeps the
/// Frobenius norm of the discarded skew part. [`SymMatrix::new`] rejects
/// inputs whose skew part exceeds `1e-8 * ‖M‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
    asymmetry: f64,
}

impl SymMatrix {
    pub const ASYMMETRY_TOLERANCE: f64 = 1e-8;

    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(SlqrError::dims(
                "symmetric matrix",
                "square",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SlqrError::NonFinite {
                context: "symmetric matrix",
            });
        }
        let sym = Self::symmetrize(m.clone());
        let tolerance = Self::ASYMMETRY_TOLERANCE * m.norm();
        if sym.asymmetry > tolerance {
            return Err(SlqrError::Asymmetric {
                asymmetry: sym.asymmetry,
                tolerance,
            });
        }
        Ok(sym)
    }

    /// Symmetrizes without the asymmetry check. Used for solver outputs
    /// that are symmetric up to rounding.
    ///
    /// Panics if `m` is not square.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let skew = (&m - m.transpose()) * 0.5;
        let asymmetry = skew.norm();
        let inner = (&m + m.transpose()) * 0.5;
        SymMatrix { inner, asymmetry }
    }

    pub fn zeros(n: usize) -> Self {
        Self::symmetrize(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self::symmetrize(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::symmetrize(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Frobenius norm of the skew part removed at construction.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let mut ev: Vec<f64> = self.inner.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// `λ_min ≥ -tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// `λ_min > tol`.
    pub fn is_pd(&self, tol: f64) -> bool {
        self.min_eigenvalue() > tol
    }

    /// `Tr(self · other)`.
    pub fn trace_product(&self, other: &DMatrix<f64>) -> f64 {
        trace_product(&self.inner, other)
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.inner
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_serde::serialize(&self.inner, s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = matrix_serde::deserialize(d)?;
        SymMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// `Tr(A·B)` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Column-stacking vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`] for a square `d×d` matrix.
pub fn unvec(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(d, d, v.as_slice())
}

/// Index pairs `(i, j)` with `i ≤ j`, row-major over the upper triangle.
/// These are the coordinates of a symmetric `d×d` matrix.
pub fn sym_coordinates(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push((i, j));
        }
    }
    out
}

/// Symmetric basis matrix `E_ij + E_ji` (or `E_ii` on the diagonal).
pub fn sym_basis(d: usize, (i, j): (usize, usize)) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(d, d);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

/// Rebuilds a symmetric matrix from coordinates in [`sym_coordinates`] order.
pub fn sym_from_coordinates(d: usize, coords: &DVector<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for (k, (i, j)) in sym_coordinates(d).into_iter().enumerate() {
        m[(i, j)] = coords[k];
        m[(j, i)] = coords[k];
    }
    m
}

/// Block-diagonal matrix from two square blocks.
pub fn block_diag(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (top.nrows(), bottom.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(top);
    out.view_mut((n, n), (m, m)).copy_from(bottom);
    out
}

/// `[top; bottom]`.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols(), "vstack column mismatch");
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// `[left right]`.
pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.nrows(), right.nrows(), "hstack row mismatch");
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    out
}

/// `[I_n; F]` for an `m×n` gain.
pub fn identity_over(gain: &DMatrix<f64>) -> DMatrix<f64> {
    vstack(&DMatrix::identity(gain.ncols(), gain.ncols()), gain)
}

/// Singular-value condition number `σ_max / σ_min` (infinite when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Serde adapter: `DMatrix<f64>` as a row-major array of arrays.
pub mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(format!(
                "ragged matrix: row {i} has {} entries, expected {ncols}",
                r.len()
            ));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    /// Same layout for a list of matrices.
    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Vec<DMatrix<f64>>, D::Error> {
            let raw = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            raw.iter()
                .map(|rows| from_rows(rows).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetrize_records_skew_part() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0]);
        let s = SymMatrix::symmetrize(m);
        assert_eq!(s[(0, 1)], 3.0);
        assert_relative_eq!(s.asymmetry(), 2.0_f64.sqrt());
    }

    #[test]
    fn new_rejects_visible_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1e-3, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(SlqrError::Asymmetric { .. })));
        let tiny = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1e-12, 1.0]);
        assert!(SymMatrix::new(tiny).is_ok());
    }

    #[test]
    fn new_rejects_non_square_and_nan() {
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        let nan = DMatrix::from_element(1, 1, f64::NAN);
        assert!(matches!(SymMatrix::new(nan), Err(SlqrError::NonFinite { .. })));
    }

    #[test]
    fn vec_identity_matches_kronecker() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.5, 2.0, 0.0, 1.0, 3.0, 1.0, -2.0]);
        let b = DMatrix::from_row_slice(3, 2, &[0.5, 1.0, -1.0, 2.0, 0.0, 1.0]);
        let lhs = vec_of(&(&a * &x * &b));
        let rhs = b.transpose().kronecker(&a) * vec_of(&x);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn sym_coordinates_round_trip() {
        let coords = DVector::from_fn(6, |i, _| i as f64 + 1.0);
        let m = sym_from_coordinates(3, &coords);
        assert_eq!(m, m.transpose());
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(2, 2)], 6.0);
    }

    #[test]
    fn row_major_serde() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(
            matrix_serde::to_rows(&m),
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]
        );
        assert!(matrix_serde::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
