//! Bartels–Stewart solver for continuous Lyapunov equations.
//!
//! `A = U S Uᵀ` is factored once (real Schur form, `S` quasi upper triangular
//! with 1×1 and 2×2 diagonal blocks). Every subsequent solve of
//! `A W + W Aᵀ = −Q` or of the adjoint equation `Aᵀ Z + Z A = −M` costs one
//! quasi-triangular back-substitution plus the congruences with `U`.
//!
//! Right-hand sides are assumed symmetric; solutions are symmetric and only
//! the upper block triangle is computed by substitution.

use nalgebra::{Complex, DMatrix, Schur};

use super::{dot, max_abs, symmetrize};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Quasi upper triangular factor prepared for back-substitution.
#[derive(Debug, Clone)]
struct Triangular<T: Scalar> {
    /// Transposed factor: column `r` holds row `r` of `S`.
    rows: DMatrix<T>,
    /// Diagonal blocks as `(start, size)` in increasing order.
    blocks: Vec<(usize, usize)>,
    scale: T,
}

impl<T: Scalar> Triangular<T> {
    fn new(s: &DMatrix<T>, blocks: Vec<(usize, usize)>) -> Self {
        Self { rows: s.transpose(), blocks, scale: max_abs(s) }
    }

    #[inline]
    fn entry(&self, r: usize, c: usize) -> T {
        self.rows[(c, r)]
    }

    /// Solves `S X + X Sᵀ = C` for symmetric `C`.
    fn solve(&self, c: &DMatrix<T>) -> Result<DMatrix<T>> {
        let n = c.nrows();
        let mut x = DMatrix::<T>::zeros(n, n);
        let srows = self.rows.as_slice();
        for jb in (0..self.blocks.len()).rev() {
            let (j0, sj) = self.blocks[jb];
            let j_end = j0 + sj;
            for ib in (0..=jb).rev() {
                let (i0, si) = self.blocks[ib];
                let i_end = i0 + si;
                let mut rhs = [[T::zero(); 2]; 2];
                {
                    let xs = x.as_slice();
                    for a in 0..si {
                        let r = i0 + a;
                        for b in 0..sj {
                            let col = j0 + b;
                            let s1 = dot(&srows[r * n + i_end..(r + 1) * n], &xs[col * n + i_end..(col + 1) * n]);
                            let s2 = dot(&xs[r * n + j_end..(r + 1) * n], &srows[col * n + j_end..(col + 1) * n]);
                            rhs[a][b] = c[(r, col)] - s1 - s2;
                        }
                    }
                }
                let block = self.solve_block(i0, si, j0, sj, &rhs)?;
                for a in 0..si {
                    for b in 0..sj {
                        x[(i0 + a, j0 + b)] = block[a][b];
                        x[(j0 + b, i0 + a)] = block[a][b];
                    }
                }
            }
        }
        Ok(x)
    }

    /// Solves the small Sylvester system `Sᵢᵢ Y + Y Sⱼⱼᵀ = R` for a block of at most 2×2.
    fn solve_block(&self, i0: usize, si: usize, j0: usize, sj: usize, rhs: &[[T; 2]; 2]) -> Result<[[T; 2]; 2]> {
        let m = si * sj;
        let idx = |a: usize, b: usize| a + si * b;
        let mut k = [[T::zero(); 5]; 4];
        for a in 0..si {
            for b in 0..sj {
                let row = idx(a, b);
                for ap in 0..si {
                    k[row][idx(ap, b)] += self.entry(i0 + a, i0 + ap);
                }
                for bp in 0..sj {
                    k[row][idx(a, bp)] += self.entry(j0 + b, j0 + bp);
                }
                k[row][m] = rhs[a][b];
            }
        }
        let tol = T::machine_epsilon() * self.scale;
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&p, &q| k[p][col].abs().partial_cmp(&k[q][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(col);
            if !(k[piv][col].abs() > tol) {
                return Err(Error::LyapunovIllPosed { separation: k[piv][col].abs().to_f64_lossy() });
            }
            k.swap(col, piv);
            for r in (col + 1)..m {
                let f = k[r][col] / k[col][col];
                for cc in col..=m {
                    let v = k[col][cc];
                    k[r][cc] -= f * v;
                }
            }
        }
        let mut sol = [T::zero(); 4];
        for r in (0..m).rev() {
            let mut acc = k[r][m];
            for cc in (r + 1)..m {
                acc -= k[r][cc] * sol[cc];
            }
            sol[r] = acc / k[r][r];
        }
        let mut out = [[T::zero(); 2]; 2];
        for a in 0..si {
            for b in 0..sj {
                out[a][b] = sol[idx(a, b)];
            }
        }
        Ok(out)
    }
}

/// Reusable Lyapunov solver holding one real Schur factorization of `A`.
#[derive(Debug, Clone)]
pub struct LyapunovSolver<T: Scalar> {
    n: usize,
    u: DMatrix<T>,
    forward: Triangular<T>,
    /// `J Sᵀ J` (J the reversal permutation), used for the adjoint equation.
    reversed: Triangular<T>,
    eigenvalues: Vec<Complex<T>>,
    separation: T,
}

impl<T: Scalar> LyapunovSolver<T> {
    /// Factors `A`. Fails when the Lyapunov operator `X ↦ AX + XAᵀ` is numerically singular,
    /// i.e. when some `|λᵢ + λⱼ|` is at rounding level.
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let schur = Schur::try_new(a.clone(), T::machine_epsilon(), 200 * n + 1000)
            .ok_or(Error::EigenNonConvergence)?;
        let eigenvalues: Vec<Complex<T>> = schur.complex_eigenvalues().iter().cloned().collect();
        let (u, mut s) = schur.unpack();

        let mut blocks = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            if i + 1 < n {
                let sub = s[(i + 1, i)].abs();
                let local = s[(i, i)].abs() + s[(i + 1, i + 1)].abs();
                if sub <= T::machine_epsilon() * local {
                    s[(i + 1, i)] = T::zero();
                } else if sub != T::zero() {
                    if i + 2 < n && s[(i + 2, i + 1)] != T::zero() {
                        return Err(Error::EigenNonConvergence);
                    }
                    blocks.push((i, 2));
                    i += 2;
                    continue;
                }
            }
            blocks.push((i, 1));
            i += 1;
        }
        for j in 0..n {
            for r in (j + 2)..n {
                s[(r, j)] = T::zero();
            }
        }

        let rho = eigenvalues.iter().fold(T::zero(), |m, z| m.max(z.re.hypot(z.im)));
        let mut separation = T::infinity();
        for (k, li) in eigenvalues.iter().enumerate() {
            for lj in &eigenvalues[k..] {
                separation = separation.min({ let z = li + lj; z.re.hypot(z.im) });
            }
        }
        let floor = T::lit(100.0) * T::from_usize_lossy(n) * T::machine_epsilon() * rho.max(T::lit(1e-30));
        if !(separation > floor) {
            return Err(Error::LyapunovIllPosed { separation: separation.to_f64_lossy() });
        }

        let rev = DMatrix::from_fn(n, n, |a, b| s[(n - 1 - b, n - 1 - a)]);
        let rev_blocks = blocks.iter().rev().map(|&(st, sz)| (n - st - sz, sz)).collect();
        let forward = Triangular::new(&s, blocks);
        let reversed = Triangular::new(&rev, rev_blocks);
        Ok(Self { n, u, forward, reversed, eigenvalues, separation })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Orthogonal Schur vectors `U` with `A = U S Uᵀ`.
    pub fn schur_vectors(&self) -> &DMatrix<T> {
        &self.u
    }

    pub fn eigenvalues(&self) -> &[Complex<T>] {
        &self.eigenvalues
    }

    /// `min |λᵢ + λⱼ|` over the spectrum of `A`.
    pub fn separation(&self) -> T {
        self.separation
    }

    /// `Uᵀ M U`.
    pub fn to_frame(&self, m: &DMatrix<T>) -> DMatrix<T> {
        self.u.tr_mul(&(m * &self.u))
    }

    /// `Uᵀ diag(d) U`, exploiting the diagonal.
    pub fn diagonal_to_frame(&self, d: &[T]) -> DMatrix<T> {
        let mut scaled = self.u.clone();
        for (i, &di) in d.iter().enumerate() {
            scaled.row_mut(i).scale_mut(di);
        }
        let mut out = self.u.tr_mul(&scaled);
        symmetrize(&mut out);
        out
    }

    /// `U X Uᵀ`.
    pub fn from_frame(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut w = &self.u * x * self.u.transpose();
        symmetrize(&mut w);
        w
    }

    /// Solves `S X + X Sᵀ = −Q̃` in the Schur frame.
    pub fn solve_frame(&self, q: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_dim(q)?;
        let mut x = self.forward.solve(&(-q))?;
        symmetrize(&mut x);
        Ok(x)
    }

    /// Solves `Sᵀ Y + Y S = −M̃` in the Schur frame.
    pub fn solve_adjoint_frame(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_dim(m)?;
        let n = self.n;
        let flipped = DMatrix::from_fn(n, n, |a, b| -m[(n - 1 - a, n - 1 - b)]);
        let y = self.reversed.solve(&flipped)?;
        let mut out = DMatrix::from_fn(n, n, |a, b| y[(n - 1 - a, n - 1 - b)]);
        symmetrize(&mut out);
        Ok(out)
    }

    /// Solves `A W + W Aᵀ = −Q`.
    pub fn solve(&self, q: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_dim(q)?;
        let x = self.solve_frame(&self.to_frame(q))?;
        Ok(self.from_frame(&x))
    }

    /// Solves `Aᵀ Z + Z A = −M`.
    pub fn solve_adjoint(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_dim(m)?;
        let y = self.solve_adjoint_frame(&self.to_frame(m))?;
        Ok(self.from_frame(&y))
    }

    fn check_dim(&self, m: &DMatrix<T>) -> Result<()> {
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: m.nrows().max(m.ncols()) });
        }
        Ok(())
    }
}

/// One-shot solve of `A W + W Aᵀ = −Q`.
pub fn solve_lyapunov<T: Scalar>(a: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    LyapunovSolver::new(a)?.solve(q)
}
