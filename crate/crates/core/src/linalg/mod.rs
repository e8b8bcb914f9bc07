//! Dense kernels: Lyapunov equations, matrix exponential, small helpers.

mod expm;
mod lyapunov;

pub use expm::matrix_exponential;
pub use lyapunov::{solve_lyapunov, LyapunovSolver};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dot product with four independent accumulators.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = T::zero();
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `(M + Mᵀ) / 2`, in place.
pub fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Frobenius inner product `Σ Aᵢⱼ Bᵢⱼ`.
pub fn frobenius_inner<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    dot(a.as_slice(), b.as_slice())
}

pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

pub fn all_finite<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite_value())
}

/// Eigen-decomposition of a symmetric matrix with a convergence check.
pub fn symmetric_eigen<T: Scalar>(m: &DMatrix<T>) -> Result<SymmetricEigen<T, nalgebra::Dyn>> {
    let niter = 100 * m.nrows().max(10);
    SymmetricEigen::try_new(m.clone(), T::machine_epsilon(), niter).ok_or(Error::EigenNonConvergence)
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Result<Vec<T>> {
    let eig = symmetric_eigen(m)?;
    let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(vals)
}

/// `diag(U X Uᵀ)` without forming the product.
pub fn congruence_diagonal<T: Scalar>(u: &DMatrix<T>, x: &DMatrix<T>) -> DVector<T> {
    let ux = u * x;
    let n = u.nrows();
    DVector::from_fn(n, |i, _| {
        let mut s = T::zero();
        for k in 0..u.ncols() {
            s += ux[(i, k)] * u[(i, k)];
        }
        s
    })
}
