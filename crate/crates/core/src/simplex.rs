//! Euclidean projection onto the standard simplex `Δ = {p ≥ 0, Σpᵢ = 1}`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Evidence that `W(p) ≻ 0`: the smallest squared Cholesky pivot and the threshold it cleared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityEvidence {
    pub min_pivot: f64,
    pub threshold: f64,
}

/// A point of the simplex, optionally with feasibility evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePoint<T: Scalar> {
    pub p: DVector<T>,
    pub sum: T,
    pub feasible: Option<FeasibilityEvidence>,
}

impl<T: Scalar> ScorePoint<T> {
    pub fn uniform(n: usize) -> Self {
        let v = T::one() / T::from_usize_lossy(n);
        let p = DVector::from_element(n, v);
        let sum = p.sum();
        Self { p, sum, feasible: None }
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn with_evidence(mut self, ev: FeasibilityEvidence) -> Self {
        self.feasible = Some(ev);
        self
    }
}

/// `Π_Δ(q) = argmin_{p ∈ Δ} ‖p − q‖²` by sorting and thresholding.
///
/// After thresholding the largest component absorbs the rounding residual so
/// that the coordinates sum to one to working precision. Components equal to
/// the threshold map to exactly zero.
pub fn project<T: Scalar>(q: &DVector<T>) -> ScorePoint<T> {
    let n = q.len();
    assert!(n > 0, "projection onto an empty simplex");
    let mut u: Vec<T> = q.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cumsum = T::zero();
    let mut tau = T::zero();
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - T::one()) / T::from_usize_lossy(k + 1);
        if uk - t > T::zero() {
            tau = t;
        } else {
            break;
        }
    }
    let mut p = q.map(|v| (v - tau).max(T::zero()));
    let largest = p.imax();
    let residual = T::one() - p.sum();
    p[largest] += residual;
    if p[largest] < T::zero() {
        p[largest] = T::zero();
    }
    let sum = p.sum();
    ScorePoint { p, sum, feasible: None }
}

/// `min pᵢ ≥ −tol` and `|Σpᵢ − 1| ≤ tol`.
pub fn is_member<T: Scalar>(p: &DVector<T>, tol: T) -> bool {
    !p.is_empty() && p.iter().all(|&v| v >= -tol) && (p.sum() - T::one()).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn identity_on_simplex() {
        let q = v(&[0.2, 0.3, 0.5]);
        let p = project(&q);
        assert!((p.p - q).amax() < 1e-15);
    }

    #[test]
    fn nearest_vertex() {
        assert_eq!(project(&v(&[2.0, 0.0])).p, v(&[1.0, 0.0]));
    }

    #[test]
    fn enumerated_example() {
        // Support {3}: candidate (0, 0, 1); support {1,2,3} would need τ = 5/6 > 0.5.
        let p = project(&v(&[0.5, 0.5, 1.5]));
        assert!((p.p - v(&[0.0, 0.0, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn symmetric_negative_input() {
        assert_eq!(project(&v(&[-1.0, -1.0])).p, v(&[0.5, 0.5]));
    }

    #[test]
    fn threshold_ties_map_to_zero() {
        // τ = 0.5 here, and the third component equals τ exactly.
        let p = project(&v(&[1.0, 1.0, 0.5]));
        assert_eq!(p.p[2], 0.0);
        assert_eq!(p.p, v(&[0.5, 0.5, 0.0]));
    }

    #[test]
    fn membership() {
        assert!(is_member(&v(&[1.0, 0.0, 0.0]), 1e-12));
        assert!(!is_member(&v(&[0.5, 0.6]), 1e-12));
        assert!(!is_member(&v(&[1.2, -0.2]), 1e-12));
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(q in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let p = project(&DVector::from_vec(q));
            prop_assert!(p.p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.sum - 1.0).abs() <= 1e-12);
            prop_assert!(is_member(&p.p, 1e-10));
        }

        #[test]
        fn idempotent(q in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let p = project(&DVector::from_vec(q));
            let pp = project(&p.p);
            prop_assert!((pp.p - p.p).amax() <= 1e-12);
        }

        #[test]
        fn obtuse_angle_at_vertices(q in prop::collection::vec(-3.0f64..3.0, 1..12)) {
            let q = DVector::from_vec(q);
            let p = project(&q);
            let r = &q - &p.p;
            for k in 0..q.len() {
                let mut e = DVector::zeros(q.len());
                e[k] = 1.0;
                prop_assert!((e - &p.p).dot(&r) <= 1e-10);
            }
        }
    }
}
