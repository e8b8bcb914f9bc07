#![allow(dead_code)]

use ctrlscore::{BasisMode, BasisOptions, GramianBasis, Horizon, NetworkSystem, ObjectiveKind};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `A = [[−1, 0], [1, −1]]`: node 1 drives node 2.
pub fn chain() -> NetworkSystem<f64> {
    NetworkSystem::from_matrix(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -1.0])).unwrap()
}

pub fn rotation() -> NetworkSystem<f64> {
    NetworkSystem::from_matrix(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap()
}

pub fn neg_identity(n: usize) -> NetworkSystem<f64> {
    NetworkSystem::from_matrix(-DMatrix::identity(n, n)).unwrap()
}

pub fn laplacian_path(n: usize) -> NetworkSystem<f64> {
    let edges: Vec<(usize, usize, f64)> = (1..n).map(|i| (i, i + 1, 1.0)).collect();
    NetworkSystem::build_laplacian_dynamics(&edges, n).unwrap()
}

/// Dense `U(−1, 1)` matrix shifted so that its spectral abscissa is `−margin`.
pub fn random_stable(n: usize, seed: u64, margin: f64) -> NetworkSystem<f64> {
    let mut r = rng(seed);
    let mut a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    let abscissa = a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    for i in 0..n {
        a[(i, i)] -= abscissa + margin;
    }
    NetworkSystem::from_matrix(a).unwrap()
}

/// Interior point of the simplex with every coordinate at least `0.1 / n`.
pub fn random_simplex_point(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let raw = DVector::from_fn(n, |_, _| 0.1 + r.random::<f64>());
    let s = raw.sum();
    raw / s
}

pub fn basis(sys: &NetworkSystem<f64>, horizon: Horizon<f64>) -> GramianBasis<f64> {
    GramianBasis::build(sys, horizon, BasisOptions::default()).unwrap()
}

pub fn basis_mode(sys: &NetworkSystem<f64>, horizon: Horizon<f64>, mode: BasisMode) -> GramianBasis<f64> {
    GramianBasis::build(sys, horizon, BasisOptions { mode, ..Default::default() }).unwrap()
}

/// Objective from the eigenvalues of `W`; `+∞` unless `W ≻ 0`.
pub fn value_by_eigen(kind: ObjectiveKind, w: &DMatrix<f64>) -> f64 {
    let vals = SymmetricEigen::new(w.clone()).eigenvalues;
    if vals.iter().any(|&l| l <= 0.0) {
        return f64::INFINITY;
    }
    match kind {
        ObjectiveKind::Volumetric => -vals.iter().map(|l| l.ln()).sum::<f64>(),
        ObjectiveKind::AverageEnergy => vals.iter().map(|l| 1.0 / l).sum(),
    }
}

/// Central differences of the objective along each coordinate, unconstrained.
pub fn fd_gradient(kind: ObjectiveKind, basis: &GramianBasis<f64>, p: &DVector<f64>, h: f64) -> DVector<f64> {
    let ws: Vec<DMatrix<f64>> = (0..p.len()).map(|i| basis.gramian(i).unwrap()).collect();
    let value = |q: &DVector<f64>| {
        let w = ws.iter().zip(q.iter()).fold(DMatrix::zeros(p.len(), p.len()), |acc, (wi, &qi)| acc + wi * qi);
        value_by_eigen(kind, &w)
    };
    DVector::from_fn(p.len(), |i, _| {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus[i] += h;
        minus[i] -= h;
        (value(&plus) - value(&minus)) / (2.0 * h)
    })
}

/// `M^{−1/2}` of a symmetric positive definite matrix.
pub fn inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Closed-form finite-horizon Gramians of the unit rotation `[[0, 1], [−1, 0]]`.
///
/// `e^{At}e₁ = (cos t, −sin t)` and `e^{At}e₂ = (sin t, cos t)`; integrating the
/// outer products gives the entries below.
pub fn rotation_gramians(t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (s2, c2) = ((2.0 * t).sin(), (2.0 * t).cos());
    let cc = 0.5 * (t + s2 / 2.0); // ∫cos²
    let ss = 0.5 * (t - s2 / 2.0); // ∫sin²
    let cs = 0.25 * (1.0 - c2); // ∫sin·cos
    (DMatrix::from_row_slice(2, 2, &[cc, -cs, -cs, ss]), DMatrix::from_row_slice(2, 2, &[ss, cs, cs, cc]))
}
