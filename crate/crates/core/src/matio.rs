//! Row-major matrix (de)serialization helpers.
//!
//! Matrices cross the JSON boundary as `Vec<Vec<f64>>` in row-major order so
//! the on-disk schema is explicit and independent of the linear-algebra
//! crate's own serde representation.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::Result;

/// Converts a dense matrix to row-major nested vectors.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds a dense matrix from row-major nested vectors, validating that the
/// rows are nonempty and of equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::dim("matrix must have at least one row"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::dim("matrix must have at least one column"));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dim("matrix rows have unequal lengths"));
    }
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}
