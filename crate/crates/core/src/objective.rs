//! The two scoring objectives, their derivatives, and feasibility.
//!
//! * volumetric: `f(p) = −log det W(p)`, `∇f = −tr(W⁻¹Wᵢ)`
//! * average energy: `g(p) = tr W(p)⁻¹`, `∇g = −tr(W⁻¹WᵢW⁻¹)`
//!
//! Both are defined on `X = {p : W(p) ≻ 0}`; outside it [`evaluate`] returns
//! `+∞` so that line searches simply reject such points.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramian::GramianBasis;
use crate::linalg::{frobenius_inner, symmetrize};
use crate::scalar::Scalar;
use crate::simplex::FeasibilityEvidence;

pub const DEFAULT_HESSIAN_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `−log det W(p)`.
    Volumetric,
    /// `tr W(p)⁻¹`.
    AverageEnergy,
}

pub enum Feasibility<T: Scalar> {
    Feasible(Cholesky<T, Dyn>, FeasibilityEvidence),
    Infeasible,
}

impl<T: Scalar> Feasibility<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(..))
    }

    pub fn evidence(&self) -> Option<FeasibilityEvidence> {
        match self {
            Feasibility::Feasible(_, ev) => Some(*ev),
            Feasibility::Infeasible => None,
        }
    }
}

/// Cholesky test with every squared pivot above `n · ε · ‖W‖`.
///
/// The Frobenius norm is used as a cheap upper bound of the spectral norm.
pub(crate) fn cholesky_feasibility<T: Scalar>(w: DMatrix<T>) -> Feasibility<T> {
    let n = w.nrows();
    if !w.iter().all(|v| v.is_finite_value()) {
        return Feasibility::Infeasible;
    }
    let threshold = T::from_usize_lossy(n) * T::machine_epsilon() * w.norm();
    let Some(chol) = Cholesky::new(w) else {
        return Feasibility::Infeasible;
    };
    let l = chol.l_dirty();
    let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(T::infinity(), |m, v| m.min(v));
    if min_pivot > threshold {
        let ev = FeasibilityEvidence { min_pivot: min_pivot.to_f64_lossy(), threshold: threshold.to_f64_lossy() };
        Feasibility::Feasible(chol, ev)
    } else {
        Feasibility::Infeasible
    }
}

/// Feasibility of `p` (`W(p) ≻ 0`), returning the Cholesky factor of `W(p)`.
pub fn feasibility<T: Scalar>(basis: &GramianBasis<T>, p: &DVector<T>) -> Result<Feasibility<T>> {
    check_finite(p)?;
    Ok(cholesky_feasibility(basis.assemble(p)?))
}

/// Objective value from a Cholesky factor of `W(p)` (in any orthogonal frame).
pub(crate) fn value_from_factor<T: Scalar>(kind: ObjectiveKind, chol: &Cholesky<T, Dyn>) -> T {
    let l = chol.l_dirty();
    let n = l.nrows();
    match kind {
        ObjectiveKind::Volumetric => -T::lit(2.0) * (0..n).fold(T::zero(), |s, i| s + l[(i, i)].ln()),
        ObjectiveKind::AverageEnergy => {
            let linv = chol.l().solve_lower_triangular(&DMatrix::identity(n, n)).expect("nonsingular factor");
            linv.norm_squared()
        }
    }
}

/// Feasibility in the basis' working frame; objective and gradient use only frame-invariant quantities.
pub(crate) fn frame_feasibility<T: Scalar>(basis: &GramianBasis<T>, p: &DVector<T>) -> Result<Feasibility<T>> {
    check_finite(p)?;
    Ok(cholesky_feasibility(basis.frame_assemble(p)?))
}

/// `F(p)`, or `+∞` when `p ∉ X`.
pub fn evaluate<T: Scalar>(kind: ObjectiveKind, basis: &GramianBasis<T>, p: &DVector<T>) -> Result<T> {
    Ok(match frame_feasibility(basis, p)? {
        Feasibility::Feasible(chol, _) => value_from_factor(kind, &chol),
        Feasibility::Infeasible => T::infinity(),
    })
}

/// Gradient from the frame factor of `W(p)`.
pub(crate) fn gradient_from_factor<T: Scalar>(
    kind: ObjectiveKind,
    basis: &GramianBasis<T>,
    chol: &Cholesky<T, Dyn>,
) -> Result<DVector<T>> {
    let n = basis.n();
    let mut winv = chol.solve(&DMatrix::identity(n, n));
    symmetrize(&mut winv);
    let m = match kind {
        ObjectiveKind::Volumetric => winv,
        ObjectiveKind::AverageEnergy => {
            let mut w2 = chol.solve(&winv);
            symmetrize(&mut w2);
            w2
        }
    };
    Ok(-basis.frame_trace(&m)?)
}

/// `∇F(p)`; every component is negative on `X`.
pub fn gradient<T: Scalar>(kind: ObjectiveKind, basis: &GramianBasis<T>, p: &DVector<T>) -> Result<DVector<T>> {
    match frame_feasibility(basis, p)? {
        Feasibility::Feasible(chol, _) => gradient_from_factor(kind, basis, &chol),
        Feasibility::Infeasible => Err(Error::Infeasible),
    }
}

/// `∇²F(p)` with the default size cap.
pub fn hessian<T: Scalar>(kind: ObjectiveKind, basis: &GramianBasis<T>, p: &DVector<T>) -> Result<DMatrix<T>> {
    hessian_with_cap(kind, basis, p, DEFAULT_HESSIAN_CAP)
}

/// `∇²F(p)`, O(n⁴); for diagnostics and tests.
///
/// With `W(p) = LLᵀ`, `Sᵢ = L⁻¹WᵢL⁻ᵀ` and `P = L⁻¹L⁻ᵀ`:
/// `∇²f = ⟨Sᵢ, Sⱼ⟩` and `∇²g = ⟨Sⱼ, PSᵢ + SᵢP⟩` (Frobenius inner products).
pub fn hessian_with_cap<T: Scalar>(
    kind: ObjectiveKind,
    basis: &GramianBasis<T>,
    p: &DVector<T>,
    cap: usize,
) -> Result<DMatrix<T>> {
    let n = basis.n();
    if n > cap {
        return Err(Error::Unsupported(format!("Hessian for n = {n} exceeds the cap of {cap}")));
    }
    let owned;
    let ws = match basis.explicit() {
        Some(ws) => ws,
        None => {
            owned = basis.to_explicit()?;
            owned.explicit().expect("explicit basis")
        }
    };
    let chol = match feasibility(basis, p)? {
        Feasibility::Feasible(c, _) => c,
        Feasibility::Infeasible => return Err(Error::Infeasible),
    };
    let l = chol.l();
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n)).expect("nonsingular factor");
    let s: Vec<DMatrix<T>> = ws
        .iter()
        .map(|w| {
            let mut si = &linv * w * linv.transpose();
            symmetrize(&mut si);
            si
        })
        .collect();
    let mut h = DMatrix::zeros(n, n);
    match kind {
        ObjectiveKind::Volumetric => {
            for i in 0..n {
                for j in i..n {
                    let v = frobenius_inner(&s[i], &s[j]);
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
        }
        ObjectiveKind::AverageEnergy => {
            let pm = &linv * linv.transpose();
            for i in 0..n {
                let ri = &pm * &s[i] + &s[i] * &pm;
                for j in 0..n {
                    h[(i, j)] = frobenius_inner(&s[j], &ri);
                }
            }
            symmetrize(&mut h);
        }
    }
    Ok(h)
}

fn check_finite<T: Scalar>(p: &DVector<T>) -> Result<()> {
    if p.iter().all(|v| v.is_finite_value()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("weight vector has non-finite entries".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gramian::{gramian_basis_infinite, BasisMode, BasisOptions};
    use crate::linalg::{symmetric_eigen, symmetric_eigenvalues};
    use crate::netsys::NetworkSystem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis_of(a: DMatrix<f64>) -> GramianBasis<f64> {
        gramian_basis_infinite(&NetworkSystem::from_matrix(a).unwrap(), BasisOptions::default()).unwrap()
    }

    fn chain() -> GramianBasis<f64> {
        basis_of(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -1.0]))
    }

    fn neg_identity(n: usize) -> GramianBasis<f64> {
        basis_of(-DMatrix::identity(n, n))
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn feasibility_examples() {
        let b = chain();
        assert!(!feasibility(&b, &v(&[0.0, 1.0])).unwrap().is_feasible());
        assert!(feasibility(&b, &v(&[1.0, 0.0])).unwrap().is_feasible());
        assert!(feasibility(&b, &v(&[0.5, 0.5])).unwrap().is_feasible());
        assert!(feasibility(&b, &v(&[f64::NAN, 0.5])).is_err());
    }

    #[test]
    fn values_for_negative_identity() {
        let b = neg_identity(2);
        let u = v(&[0.5, 0.5]);
        assert!((evaluate(ObjectiveKind::Volumetric, &b, &u).unwrap() - 16f64.ln()).abs() < 1e-14);
        assert!((evaluate(ObjectiveKind::AverageEnergy, &b, &u).unwrap() - 8.0).abs() < 1e-13);
    }

    #[test]
    fn chain_value_and_infinity_marker() {
        let b = chain();
        let f = evaluate(ObjectiveKind::Volumetric, &b, &v(&[2.0 / 3.0, 1.0 / 3.0])).unwrap();
        assert!((f - 12f64.ln()).abs() < 1e-13);
        assert!(evaluate(ObjectiveKind::Volumetric, &b, &v(&[0.0, 1.0])).unwrap().is_infinite());
        assert!(matches!(gradient(ObjectiveKind::Volumetric, &b, &v(&[0.0, 1.0])), Err(Error::Infeasible)));
    }

    #[test]
    fn closed_form_gradients_and_hessians() {
        let b = neg_identity(2);
        let u = v(&[0.5, 0.5]);
        let gf = gradient(ObjectiveKind::Volumetric, &b, &u).unwrap();
        let gg = gradient(ObjectiveKind::AverageEnergy, &b, &u).unwrap();
        assert!((gf - v(&[-2.0, -2.0])).amax() < 1e-13);
        assert!((gg - v(&[-8.0, -8.0])).amax() < 1e-12);

        let b = neg_identity(3);
        let p = v(&[0.2, 0.3, 0.5]);
        let hf = hessian(ObjectiveKind::Volumetric, &b, &p).unwrap();
        let hg = hessian(ObjectiveKind::AverageEnergy, &b, &p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (wf, wg) = if i == j { (1.0 / (p[i] * p[i]), 4.0 / p[i].powi(3)) } else { (0.0, 0.0) };
                assert!((hf[(i, j)] - wf).abs() < 1e-10 * wf.max(1.0));
                assert!((hg[(i, j)] - wg).abs() < 1e-10 * wg.max(1.0));
            }
        }
    }

    #[test]
    fn adjoint_frame_agrees_with_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 7;
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        for i in 0..n {
            a[(i, i)] -= 4.0;
        }
        let sys = NetworkSystem::from_matrix(a).unwrap();
        let ex = gramian_basis_infinite(&sys, BasisOptions { mode: BasisMode::Explicit, ..Default::default() }).unwrap();
        let ad = gramian_basis_infinite(&sys, BasisOptions { mode: BasisMode::Adjoint, ..Default::default() }).unwrap();
        let p = DVector::from_fn(n, |_, _| rng.random::<f64>() + 0.1);
        for kind in [ObjectiveKind::Volumetric, ObjectiveKind::AverageEnergy] {
            let (fe, fa) = (evaluate(kind, &ex, &p).unwrap(), evaluate(kind, &ad, &p).unwrap());
            assert!((fe - fa).abs() <= 1e-10 * fe.abs().max(1.0));
            let (ge, ga) = (gradient(kind, &ex, &p).unwrap(), gradient(kind, &ad, &p).unwrap());
            assert!((&ge - &ga).norm() <= 1e-9 * ge.norm());
            assert!(ge.iter().all(|&x| x < 0.0));
        }
        let he = hessian(ObjectiveKind::Volumetric, &ex, &p).unwrap();
        let ha = hessian(ObjectiveKind::Volumetric, &ad, &p).unwrap();
        assert!((&he - &ha).norm() <= 1e-9 * he.norm());
        assert!(matches!(hessian_with_cap(ObjectiveKind::Volumetric, &ad, &p, 4), Err(Error::Unsupported(_))));
    }

    #[test]
    fn quadratic_form_matches_whitened_trace() {
        let b = chain();
        let p = v(&[0.6, 0.4]);
        let x = v(&[0.3, -1.1]);
        let h = hessian(ObjectiveKind::Volumetric, &b, &p).unwrap();
        let quad = (x.transpose() * &h * &x)[0];
        let eig = symmetric_eigen(&b.assemble(&p).unwrap()).unwrap();
        let isqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        let g = &isqrt * b.assemble(&x).unwrap() * &isqrt;
        assert!((quad - (&g * &g).trace()).abs() <= 1e-10 * quad.abs());
        assert!(symmetric_eigenvalues(&h).unwrap()[0] > 0.0);
    }

    #[test]
    fn scaling_shifts_volumetric_value() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -1.0]);
        let b1 = basis_of(a.clone());
        // Wᵢ of A/c equals c·Wᵢ of A.
        let c = 3.0;
        let b2 = basis_of(a / c);
        let p = v(&[0.55, 0.45]);
        let (f1, f2) = (
            evaluate(ObjectiveKind::Volumetric, &b1, &p).unwrap(),
            evaluate(ObjectiveKind::Volumetric, &b2, &p).unwrap(),
        );
        assert!((f2 - (f1 - 2.0 * c.ln())).abs() < 1e-12);
        let (g1, g2) = (
            evaluate(ObjectiveKind::AverageEnergy, &b1, &p).unwrap(),
            evaluate(ObjectiveKind::AverageEnergy, &b2, &p).unwrap(),
        );
        assert!((g2 - g1 / c).abs() < 1e-12);
        let (h1, h2) =
            (hessian(ObjectiveKind::Volumetric, &b1, &p).unwrap(), hessian(ObjectiveKind::Volumetric, &b2, &p).unwrap());
        assert!((h1 - h2).amax() < 1e-9);
    }
}
