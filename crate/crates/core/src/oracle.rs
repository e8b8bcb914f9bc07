//! Brute-force reference implementations for cross-checking the fast paths.
//!
//! None of these share numerical kernels with the code they check: the
//! quadrature propagates with its own Taylor series, the grid search and the
//! finite differences evaluate objectives through eigenvalues or LU instead of
//! Cholesky, and the projection oracle enumerates support sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gramian::{BasisOptions, GramianBasis, Horizon};
use crate::netsys::NetworkSystem;
use crate::objective::{gradient, ObjectiveKind};
use crate::optimizer::{solve, OptimizerConfig};
use crate::scalar::Scalar;
use crate::simplex::project;

pub const GRID_MAX_N: usize = 4;
pub const QP_MAX_N: usize = 12;

/// `exp(A h)` by a Taylor series, halving `h` until `‖A h‖₁ ≤ 1/2` and squaring back.
fn taylor_step<T: Scalar>(a: &DMatrix<T>, h: T) -> DMatrix<T> {
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().fold(T::zero(), |s, v| s + v.abs())).fold(T::zero(), |m, v| m.max(v));
    let mut squarings = 0u32;
    let mut scaled = h.abs() * norm1;
    while scaled > T::lit(0.5) {
        scaled *= T::lit(0.5);
        squarings += 1;
    }
    let ah = a * (h / T::lit(2f64.powi(squarings as i32)));
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..60 {
        term = &term * &ah / T::from_usize_lossy(k);
        sum += &term;
        if term.amax() <= T::machine_epsilon() * T::lit(1e-3) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Composite Simpson approximation of `Wᵢ(T) = ∫₀^T e^{At} eᵢeᵢᵀ e^{Aᵀt} dt` (`i` 0-based).
pub fn gramian_quadrature<T: Scalar>(a: &DMatrix<T>, i: usize, t: T, steps: usize) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if i >= n {
        return Err(Error::InvalidInput(format!("node {i} out of range")));
    }
    if steps < 2 || steps % 2 != 0 {
        return Err(Error::InvalidInput("quadrature needs an even number of steps ≥ 2".into()));
    }
    if !(t >= T::zero()) || !t.is_finite_value() {
        return Err(Error::InvalidInput("horizon must be finite and nonnegative".into()));
    }
    let h = t / T::from_usize_lossy(steps);
    let phi = taylor_step(a, h);
    let mut x = DVector::zeros(n);
    x[i] = T::one();
    let mut acc = DMatrix::zeros(n, n);
    for k in 0..=steps {
        let w = if k == 0 || k == steps {
            T::one()
        } else if k % 2 == 1 {
            T::lit(4.0)
        } else {
            T::lit(2.0)
        };
        acc += &x * x.transpose() * w;
        x = &phi * x;
    }
    Ok(acc * (h / T::lit(3.0)))
}

/// Objective from `W` through LU (determinant and inverse); `None` if `W` is singular or `det W ≤ 0`.
fn lu_value<T: Scalar>(kind: ObjectiveKind, w: &DMatrix<T>) -> Option<T> {
    let lu = w.clone().lu();
    match kind {
        ObjectiveKind::Volumetric => {
            let d = lu.determinant();
            (d > T::zero()).then(|| -d.ln())
        }
        ObjectiveKind::AverageEnergy => lu.try_inverse().map(|inv| inv.trace()),
    }
}

/// Central differences `(F(p + h eᵢ) − F(p − h eᵢ)) / 2h` of the objective extended off the simplex.
///
/// Coordinates are clamped at zero; a clamped side shortens its half-step.
pub fn finite_difference_gradient<T: Scalar>(
    kind: ObjectiveKind,
    basis: &GramianBasis<T>,
    p: &DVector<T>,
    h: T,
) -> Result<DVector<T>> {
    if !(h > T::zero()) || !h.is_finite_value() {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    let n = basis.n();
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p.len() });
    }
    let ws: Vec<DMatrix<T>> = (0..n).map(|i| basis.gramian(i)).collect::<Result<_>>()?;
    let value_at = |q: &DVector<T>| -> Result<T> {
        let mut w = DMatrix::zeros(n, n);
        for (wi, &qi) in ws.iter().zip(q.iter()) {
            w += wi * qi;
        }
        let eig = SymmetricEigen::new(w.clone());
        let tol = T::from_usize_lossy(n) * T::machine_epsilon() * w.norm();
        if eig.eigenvalues.iter().any(|&l| !(l > tol)) {
            return Err(Error::Infeasible);
        }
        lu_value(kind, &w).ok_or(Error::Infeasible)
    };
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus[i] += h;
        minus[i] = (minus[i] - h).max(T::zero());
        let width = plus[i] - minus[i];
        g[i] = (value_at(&plus)? - value_at(&minus)?) / width;
    }
    Ok(g)
}

/// Every point of the lattice `{p : pᵢ = kᵢ / resolution}` with its objective
/// value (`+∞` where `W(p)` is not positive definite).
pub fn grid_values<T: Scalar>(kind: ObjectiveKind, basis: &GramianBasis<T>, resolution: usize) -> Result<Vec<(DVector<T>, T)>> {
    let n = basis.n();
    if n > GRID_MAX_N {
        return Err(Error::Unsupported(format!("grid search needs n ≤ {GRID_MAX_N}, got {n}")));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    let ws: Vec<DMatrix<T>> = (0..n).map(|i| basis.gramian(i)).collect::<Result<_>>()?;
    let res = T::from_usize_lossy(resolution);
    let mut out = Vec::new();
    let mut k = vec![0usize; n];
    loop {
        let used: usize = k[..n - 1].iter().sum();
        if used <= resolution {
            k[n - 1] = resolution - used;
            let p = DVector::from_iterator(n, k.iter().map(|&ki| T::from_usize_lossy(ki) / res));
            let mut w = DMatrix::zeros(n, n);
            for (wi, &pi) in ws.iter().zip(p.iter()) {
                w += wi * pi;
            }
            let vals = SymmetricEigen::new(w.clone()).eigenvalues;
            let tol = T::from_usize_lossy(n) * T::machine_epsilon() * w.norm();
            let value = if vals.iter().all(|&l| l > tol) {
                match kind {
                    ObjectiveKind::Volumetric => -vals.iter().fold(T::zero(), |s, &l| s + l.ln()),
                    ObjectiveKind::AverageEnergy => vals.iter().fold(T::zero(), |s, &l| s + l.recip()),
                }
            } else {
                T::infinity()
            };
            out.push((p, value));
        }
        // odometer over the first n − 1 coordinates
        let mut j = 0;
        loop {
            if j + 1 >= n {
                return Ok(out);
            }
            k[j] += 1;
            if k[..n - 1].iter().sum::<usize>() <= resolution {
                break;
            }
            k[j] = 0;
            j += 1;
        }
    }
}

/// Lattice minimizer of `F` at the given resolution (first minimizer in lattice order).
pub fn grid_search_min<T: Scalar>(kind: ObjectiveKind, basis: &GramianBasis<T>, resolution: usize) -> Result<(DVector<T>, T)> {
    let mut best: Option<(DVector<T>, T)> = None;
    for (p, v) in grid_values(kind, basis, resolution)? {
        if v.is_finite_value() && best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((p, v));
        }
    }
    best.ok_or(Error::Infeasible)
}

/// Exact simplex projection by enumerating every nonempty support set.
pub fn projection_qp_oracle<T: Scalar>(q: &DVector<T>) -> Result<DVector<T>> {
    let n = q.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > QP_MAX_N {
        return Err(Error::Unsupported(format!("projection oracle needs n ≤ {QP_MAX_N}, got {n}")));
    }
    let mut best: Option<(T, DVector<T>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let s = T::from_usize_lossy(support.len());
        let shift = (support.iter().fold(T::zero(), |acc, &i| acc + q[i]) - T::one()) / s;
        let mut p = DVector::zeros(n);
        for &i in &support {
            p[i] = q[i] - shift;
        }
        if p.iter().any(|&v| v < T::zero()) {
            continue;
        }
        let d = (&p - q).norm_squared();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, p));
        }
    }
    Ok(best.expect("a single-vertex support is always feasible").1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Gradient,
    Quadrature,
    Projection,
    Grid,
}

impl Check {
    pub const ALL: [Check; 4] = [Check::Gradient, Check::Quadrature, Check::Projection, Check::Grid];

    pub fn name(self) -> &'static str {
        match self {
            Check::Gradient => "gradient",
            Check::Quadrature => "quadrature",
            Check::Projection => "projection",
            Check::Grid => "grid",
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Check::Gradient => 1e-6,
            Check::Quadrature => 1e-5,
            Check::Projection => 1e-8,
            Check::Grid => 1e-2,
        }
    }
}

impl std::str::FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown check '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub check: Check,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn random_stable(n: usize, seed: u64) -> Result<NetworkSystem<f64>> {
    NetworkSystem::generate_random_network(n, 0.6, seed, -(n as f64))
}

fn random_simplex_point(rng: &mut impl rand::Rng, n: usize) -> DVector<f64> {
    let raw = DVector::from_fn(n, |_, _| 0.2 + rng.random::<f64>());
    let s = raw.sum();
    raw / s
}

fn gradient_check(seed: u64) -> Result<(usize, f64)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k in 0..6u64 {
        let n = 3 + (k as usize % 4);
        let basis = GramianBasis::build(&random_stable(n, seed.wrapping_add(k))?, Horizon::Infinite, BasisOptions::default())?;
        let p = random_simplex_point(&mut rng, n);
        for kind in [ObjectiveKind::Volumetric, ObjectiveKind::AverageEnergy] {
            let g = gradient(kind, &basis, &p)?;
            let fd = finite_difference_gradient(kind, &basis, &p, 1e-5)?;
            worst = worst.max((&g - fd).amax() / g.amax());
            count += 1;
        }
    }
    Ok((count, worst))
}

fn quadrature_check(seed: u64) -> Result<(usize, f64)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k in 0..3u64 {
        let n = 3 + k as usize;
        let sys = random_stable(n, seed.wrapping_add(100 + k))?;
        let basis = GramianBasis::build(&sys, Horizon::Infinite, BasisOptions::default())?;
        let decay = crate::netsys::default_spectral_summary(&sys)?.max_real_part.abs();
        let t = 20.0 / decay;
        for i in 0..n {
            let wq = gramian_quadrature(sys.a(), i, t, 4000)?;
            worst = worst.max((wq - basis.gramian(i)?).amax());
            count += 1;
        }
    }
    Ok((count, worst))
}

fn projection_check(seed: u64) -> Result<(usize, f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in 2..=6 {
        for _ in 0..200 {
            let q = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let d = (project(&q).p - projection_qp_oracle(&q)?).amax();
            worst = worst.max(d);
            count += 1;
        }
    }
    Ok((count, worst))
}

fn grid_check(seed: u64) -> Result<(usize, f64)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let resolution = 400;
    for k in 0..3u64 {
        let n = 2 + (k as usize % 2);
        let basis = GramianBasis::build(&random_stable(n, seed.wrapping_add(200 + k))?, Horizon::Infinite, BasisOptions::default())?;
        for kind in [ObjectiveKind::Volumetric, ObjectiveKind::AverageEnergy] {
            let cfg = OptimizerConfig { epsilon: 1e-8, ..Default::default() };
            let p = solve(kind, &basis, &cfg)?.point.p;
            let (q, _) = grid_search_min(kind, &basis, resolution)?;
            worst = worst.max((p - q).amax());
            count += 1;
        }
    }
    Ok((count, worst))
}

/// Runs the selected oracle cross-checks on instances derived from `seed`.
/// `tolerance` overrides every per-check default.
pub fn verification_suite(seed: u64, checks: &[Check], tolerance: Option<f64>) -> Result<Vec<CheckResult>> {
    checks
        .iter()
        .map(|&check| {
            let (instances, max_error) = match check {
                Check::Gradient => gradient_check(seed)?,
                Check::Quadrature => quadrature_check(seed)?,
                Check::Projection => projection_check(seed)?,
                Check::Grid => grid_check(seed)?,
            };
            let tolerance = tolerance.unwrap_or(check.default_tolerance());
            Ok(CheckResult { check, instances, max_error, tolerance, passed: max_error <= tolerance })
        })
        .collect()
}
