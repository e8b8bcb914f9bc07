use nalgebra::DMatrix;

use super::all_finite;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `exp(A t)` by scaling and squaring with Padé approximants.
pub fn matrix_exponential<T: Scalar>(a: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    if !all_finite(a) || !t.is_finite_value() {
        return Err(Error::InvalidInput("matrix exponential of non-finite input".into()));
    }
    if a.nrows() == 0 {
        return Ok(a.clone());
    }
    let at = a * t;
    let norm1 = at
        .column_iter()
        .map(|c| c.iter().fold(T::zero(), |s, v| s + v.abs()))
        .fold(T::zero(), |m, v| m.max(v));
    let e = at.exp();
    if !all_finite(&e) {
        return Err(Error::ExponentialOverflow { norm: norm1.to_f64_lossy() });
    }
    Ok(e)
}
