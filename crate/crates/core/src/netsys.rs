//! Network systems `ẋ = Ax`: construction, spectra and uniqueness certificates.

use std::collections::VecDeque;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramian::Horizon;
use crate::linalg::{all_finite, symmetric_eigenvalues};
use crate::scalar::Scalar;

pub const DEFAULT_TOL_STAB: f64 = 1e-9;
pub const DEFAULT_TOL_EIG: f64 = 1e-8;
const LAPLACIAN_ROW_SUM_TOL: f64 = 1e-10;
const CONNECTIVITY_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    EdgeList,
    LaplacianDynamics,
    Random,
    Explicit,
}

/// Continuous-time network dynamics `ẋ = Ax`.
///
/// Node `i` (0-indexed) influencing node `j` is stored as `A[j][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSystem<T: Scalar> {
    a: DMatrix<T>,
    origin: Origin,
    node_labels: Vec<String>,
}

impl<T: Scalar> NetworkSystem<T> {
    /// Wraps an explicit state matrix.
    pub fn from_matrix(a: DMatrix<T>) -> Result<Self> {
        Self::with_origin(a, Origin::Explicit)
    }

    pub fn with_origin(a: DMatrix<T>, origin: Origin) -> Result<Self> {
        if a.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
        }
        if !all_finite(&a) {
            return Err(Error::InvalidInput("state matrix has non-finite entries".into()));
        }
        if origin == Origin::LaplacianDynamics {
            check_laplacian_dynamics(&a)?;
        }
        let node_labels = (1..=a.nrows()).map(|i| i.to_string()).collect();
        Ok(Self { a, origin, node_labels })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: labels.len() });
        }
        self.node_labels = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    /// The dual system `ẋ = Aᵀx`, whose controllability is the observability of this one.
    ///
    /// Laplacian dynamics are symmetric, so the origin is preserved.
    pub fn transposed(&self) -> Self {
        Self { a: self.a.transpose(), origin: self.origin, node_labels: self.node_labels.clone() }
    }

    /// Relabels nodes by `perm`: node `i` of the result is node `perm[i]` of `self` (`P A Pᵀ`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&k| k >= n || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::InvalidInput("not a permutation".into()));
        }
        let a = DMatrix::from_fn(n, n, |i, j| self.a[(perm[i], perm[j])]);
        let node_labels = perm.iter().map(|&k| self.node_labels[k].clone()).collect();
        Ok(Self { a, origin: self.origin, node_labels })
    }

    /// Parses a `src dst weight` edge list with 1-indexed node ids.
    ///
    /// Duplicate edges accumulate; self-loops land on the diagonal. When
    /// `directed` is false every edge is mirrored (a self-loop is stored once).
    pub fn load_edge_list(text: &str, directed: bool) -> Result<Self> {
        let edges = parse_edges::<T>(text)?;
        let n = edges.iter().map(|&(s, d, _)| s.max(d)).max().unwrap_or(0);
        let mut a = DMatrix::zeros(n, n);
        for &(src, dst, w) in &edges {
            a[(dst - 1, src - 1)] += w;
            if !directed && src != dst {
                a[(src - 1, dst - 1)] += w;
            }
        }
        Self::with_origin(a, Origin::EdgeList)
    }

    /// Parses `{"n": int, "A": [[...], ...]}` (row-major).
    pub fn load_matrix_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            n: usize,
            #[serde(rename = "A")]
            a: Vec<Vec<f64>>,
            #[serde(default)]
            labels: Option<Vec<String>>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.n == 0 || doc.a.is_empty() {
            return Err(Error::EmptyInput);
        }
        if doc.a.len() != doc.n {
            return Err(Error::DimensionMismatch { expected: doc.n, got: doc.a.len() });
        }
        for row in &doc.a {
            if row.len() != doc.n {
                return Err(Error::DimensionMismatch { expected: doc.n, got: row.len() });
            }
        }
        let a = DMatrix::from_fn(doc.n, doc.n, |i, j| T::lit(doc.a[i][j]));
        let sys = Self::from_matrix(a)?;
        match doc.labels {
            Some(l) => sys.with_labels(l),
            None => Ok(sys),
        }
    }

    /// Serializes as the dense-matrix JSON input format.
    pub fn to_matrix_json(&self) -> String {
        let rows: Vec<Vec<f64>> =
            (0..self.n()).map(|i| (0..self.n()).map(|j| self.a[(i, j)].to_f64_lossy()).collect()).collect();
        serde_json::json!({ "n": self.n(), "A": rows }).to_string()
    }

    /// `A = −L` for the weighted undirected graph on `n` nodes (1-indexed edges).
    pub fn build_laplacian_dynamics(edges: &[(usize, usize, T)], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let mut a = DMatrix::zeros(n, n);
        for (k, &(u, v, w)) in edges.iter().enumerate() {
            if u == 0 || v == 0 || u > n || v > n {
                return Err(Error::InvalidInput(format!("edge {}: node id out of range 1..={n}", k + 1)));
            }
            if !(w > T::zero()) || !w.is_finite_value() {
                return Err(Error::InvalidInput(format!("edge {}: weight must be positive", k + 1)));
            }
            if u == v {
                continue;
            }
            let (i, j) = (u - 1, v - 1);
            a[(i, j)] += w;
            a[(j, i)] += w;
            a[(i, i)] -= w;
            a[(j, j)] -= w;
        }
        Self::with_origin(a, Origin::LaplacianDynamics)
    }

    /// Laplacian dynamics from edge-list text (undirected, positive weights).
    pub fn load_laplacian_edge_list(text: &str) -> Result<Self> {
        let edges = parse_edges::<T>(text)?;
        let n = edges.iter().map(|&(s, d, _)| s.max(d)).max().unwrap_or(0);
        Self::build_laplacian_dynamics(&edges, n)
    }

    /// Erdős–Rényi style random network with `Uniform[0,1]` edge weights.
    ///
    /// Each off-diagonal entry is nonzero with probability `density`; the
    /// diagonal is set to `diagonal_shift`. Deterministic in `seed`.
    pub fn generate_random_network(n: usize, density: f64, seed: u64, diagonal_shift: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidInput(format!("density must lie in (0, 1], got {density}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                if i == j {
                    continue;
                }
                if rng.random_bool(density) {
                    a[(i, j)] = T::lit(rng.random::<f64>());
                }
            }
        }
        for i in 0..n {
            a[(i, i)] = diagonal_shift;
        }
        Self::with_origin(a, Origin::Random)
    }
}

fn parse_edges<T: Scalar>(text: &str) -> Result<Vec<(usize, usize, T)>> {
    let mut edges = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let line_no = ln + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: line_no, msg: format!("expected `src dst weight`, got {} fields", fields.len()) });
        }
        let id = |s: &str| -> Result<usize> {
            let v: i64 = s.parse().map_err(|_| Error::Parse { line: line_no, msg: format!("bad node id `{s}`") })?;
            if v <= 0 {
                return Err(Error::Parse { line: line_no, msg: format!("node id must be positive, got {v}") });
            }
            Ok(v as usize)
        };
        let src = id(fields[0])?;
        let dst = id(fields[1])?;
        let w: f64 =
            fields[2].parse().map_err(|_| Error::Parse { line: line_no, msg: format!("bad weight `{}`", fields[2]) })?;
        if !w.is_finite() {
            return Err(Error::Parse { line: line_no, msg: "weight must be finite".into() });
        }
        edges.push((src, dst, T::lit(w)));
    }
    if edges.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(edges)
}

fn check_laplacian_dynamics<T: Scalar>(a: &DMatrix<T>) -> Result<()> {
    let n = a.nrows();
    let tol = T::lit(LAPLACIAN_ROW_SUM_TOL);
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            row += a[(i, j)];
            if i != j && (a[(i, j)] < T::zero() || a[(i, j)] != a[(j, i)]) {
                return Err(Error::InvalidInput("Laplacian dynamics must be symmetric with nonnegative off-diagonals".into()));
            }
        }
        if row.abs() > tol {
            return Err(Error::InvalidInput(format!("Laplacian dynamics row {} sums to {row}", i + 1)));
        }
    }
    Ok(())
}

/// Eigenvalue summary of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary<T: Scalar> {
    pub eigenvalues: Vec<Complex<T>>,
    pub max_real_part: T,
    pub is_stable: bool,
    /// Some `λᵢ + λⱼ` vanishes (relative to the spectral radius), i.e. `A` and `−A` share an eigenvalue.
    pub common_eig_with_negation: bool,
    /// `min |λᵢ + λⱼ|` over all pairs including `i = j`.
    pub min_pair_sum: T,
}

pub fn spectral_summary<T: Scalar>(sys: &NetworkSystem<T>, tol_stab: T, tol_eig: T) -> Result<SpectralSummary<T>> {
    let a = sys.a();
    let n = a.nrows();
    let schur = nalgebra::Schur::try_new(a.clone(), T::machine_epsilon(), 200 * n + 1000)
        .ok_or(Error::EigenNonConvergence)?;
    let eigenvalues: Vec<Complex<T>> = schur.complex_eigenvalues().iter().cloned().collect();
    let max_real_part = eigenvalues.iter().fold(-T::infinity(), |m, z| m.max(z.re));
    let rho = eigenvalues.iter().fold(T::zero(), |m, z| m.max(z.re.hypot(z.im)));
    let mut min_pair_sum = T::infinity();
    for (k, li) in eigenvalues.iter().enumerate() {
        for lj in &eigenvalues[k..] {
            min_pair_sum = min_pair_sum.min({ let z = li + lj; z.re.hypot(z.im) });
        }
    }
    let is_stable = max_real_part < -tol_stab;
    // Stable spectra are disjoint from their negation: Re(λᵢ + λⱼ) < 0.
    let common_eig_with_negation = !is_stable && min_pair_sum <= tol_eig * rho;
    Ok(SpectralSummary { eigenvalues, max_real_part, is_stable, common_eig_with_negation, min_pair_sum })
}

pub fn default_spectral_summary<T: Scalar>(sys: &NetworkSystem<T>) -> Result<SpectralSummary<T>> {
    spectral_summary(sys, T::lit(DEFAULT_TOL_STAB), T::lit(DEFAULT_TOL_EIG))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    StableInfinite,
    FiniteNoCommonEigenvalue,
    FiniteLaplacianConnected,
    Unknown,
}

impl Verdict {
    pub fn is_certified(self) -> bool {
        self != Verdict::Unknown
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEvidence {
    pub max_real_part: f64,
    pub min_pair_sum: f64,
    pub algebraic_connectivity: Option<f64>,
    pub bfs_connected: Option<bool>,
}

/// Whether the scoring problem on `sys` at `horizon` provably has a unique optimum.
///
/// `Unknown` means only that no certificate applies, never that the optimum is non-unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCertificate {
    pub verdict: Verdict,
    pub horizon: Horizon<f64>,
    pub evidence: CertificateEvidence,
}

pub fn uniqueness_certificate<T: Scalar>(sys: &NetworkSystem<T>, horizon: Horizon<T>) -> Result<UniquenessCertificate> {
    horizon.validate()?;
    let spec = default_spectral_summary(sys)?;
    let mut evidence = CertificateEvidence {
        max_real_part: spec.max_real_part.to_f64_lossy(),
        min_pair_sum: spec.min_pair_sum.to_f64_lossy(),
        algebraic_connectivity: None,
        bfs_connected: None,
    };
    let verdict = match horizon {
        Horizon::Infinite => {
            if !spec.is_stable {
                return Err(Error::InfiniteHorizonUnstable { max_real_part: evidence.max_real_part });
            }
            Verdict::StableInfinite
        }
        Horizon::Finite(_) => {
            if !spec.common_eig_with_negation {
                Verdict::FiniteNoCommonEigenvalue
            } else if sys.origin() == Origin::LaplacianDynamics {
                let (lambda2, spectral_ok) = algebraic_connectivity(sys)?;
                let bfs = bfs_connected(sys.a());
                evidence.algebraic_connectivity = Some(lambda2.to_f64_lossy());
                evidence.bfs_connected = Some(bfs);
                if spectral_ok && bfs {
                    Verdict::FiniteLaplacianConnected
                } else {
                    Verdict::Unknown
                }
            } else {
                Verdict::Unknown
            }
        }
    };
    Ok(UniquenessCertificate { verdict, horizon: horizon.to_f64(), evidence })
}

/// Second-smallest eigenvalue of `L = −A` and whether it clears `1e−8 · max degree`.
pub fn algebraic_connectivity<T: Scalar>(sys: &NetworkSystem<T>) -> Result<(T, bool)> {
    let l = -sys.a().clone();
    let n = l.nrows();
    if n == 1 {
        return Ok((T::zero(), true));
    }
    let vals = symmetric_eigenvalues(&l)?;
    let max_degree = (0..n).fold(T::zero(), |m, i| m.max(l[(i, i)]));
    let lambda2 = vals[1];
    Ok((lambda2, lambda2 > T::lit(CONNECTIVITY_REL_TOL) * max_degree))
}

/// Connectivity of the undirected support graph of `A`.
pub fn bfs_connected<T: Scalar>(a: &DMatrix<T>) -> bool {
    let n = a.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !seen[v] && v != u && (a[(u, v)] != T::zero() || a[(v, u)] != T::zero()) {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}
