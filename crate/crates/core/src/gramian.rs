//! Per-node controllability Gramians `Wᵢ` and the queries the optimizer needs.
//!
//! A [`GramianBasis`] answers two questions for a weight vector `p` and a
//! symmetric `M`: the weighted Gramian `Σ pᵢ Wᵢ`, and the traces `tr(M Wᵢ)`.
//! In `Explicit` storage every `Wᵢ` is materialized. In `Adjoint` storage only
//! the Schur factorization of `A` is kept: the weighted Gramian is one
//! Lyapunov solve with `Q = diag(p)`, and the traces are the diagonal of the
//! solution `Z` of `Aᵀ Z + Z A = −M`, since
//! `tr(M Wᵢ) = −tr((AᵀZ + ZA) Wᵢ) = −tr(Z (AWᵢ + WᵢAᵀ)) = Zᵢᵢ`.
//! Over a finite horizon `T` the right-hand side gains the `E eᵢeᵢᵀ Eᵀ` term
//! (`E = exp(AT)`), so `tr(M Wᵢ(T)) = Zᵢᵢ − (EᵀZE)ᵢᵢ`.
//!
//! Internally the adjoint path works in the Schur frame `Uᵀ(·)U`; since the
//! similarity is orthogonal, determinants, traces of inverses and definiteness
//! are unchanged, so the objective evaluates directly in that frame.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, congruence_diagonal, frobenius_inner, matrix_exponential, symmetrize, LyapunovSolver,
};
use crate::netsys::{default_spectral_summary, NetworkSystem};
use crate::scalar::Scalar;

pub const DEFAULT_ADJOINT_THRESHOLD: usize = 256;
const CACHE_MAGIC: &[u8; 4] = b"CSGB";
const CACHE_VERSION: u32 = 1;
const CACHE_RESIDUAL_TOL: f64 = 1e-8;

/// Integration horizon of the Gramians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon<T> {
    Infinite,
    Finite(T),
}

impl<T: Scalar> Horizon<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Horizon::Finite(t) if !(t > T::zero()) || !t.is_finite_value() => {
                Err(Error::InvalidInput(format!("horizon T must be positive and finite, got {t}")))
            }
            _ => Ok(()),
        }
    }

    pub fn to_f64(&self) -> Horizon<f64> {
        match *self {
            Horizon::Infinite => Horizon::Infinite,
            Horizon::Finite(t) => Horizon::Finite(t.to_f64_lossy()),
        }
    }

    pub fn from_f64(h: Horizon<f64>) -> Self {
        match h {
            Horizon::Infinite => Horizon::Infinite,
            Horizon::Finite(t) => Horizon::Finite(T::lit(t)),
        }
    }
}

impl<T: Scalar> fmt::Display for Horizon<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Infinite => f.write_str("inf"),
            Horizon::Finite(t) => write!(f, "{t}"),
        }
    }
}

impl<T: Scalar> std::str::FromStr for Horizon<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(Horizon::Infinite);
        }
        let t: f64 = s.parse().map_err(|_| Error::InvalidInput(format!("bad horizon `{s}`")))?;
        let h = Horizon::Finite(T::lit(t));
        h.validate()?;
        Ok(h)
    }
}

impl<T: Scalar> Serialize for Horizon<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::Infinite => s.serialize_str("inf"),
            Horizon::Finite(t) => s.serialize_f64(t.to_f64_lossy()),
        }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Horizon<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(Horizon::Finite(T::lit(t))),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisMode {
    /// Explicit up to `adjoint_threshold` nodes, adjoint above.
    Auto,
    Explicit,
    Adjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageKind {
    Explicit,
    Adjoint,
}

#[derive(Debug, Clone, Copy)]
pub struct BasisOptions {
    pub mode: BasisMode,
    pub adjoint_threshold: usize,
    /// Fall back to explicit storage when a finite-horizon adjoint is unavailable.
    pub allow_explicit_fallback: bool,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self { mode: BasisMode::Auto, adjoint_threshold: DEFAULT_ADJOINT_THRESHOLD, allow_explicit_fallback: true }
    }
}

#[derive(Debug, Clone)]
enum Storage<T: Scalar> {
    Explicit(Vec<DMatrix<T>>),
    Adjoint {
        solver: LyapunovSolver<T>,
        /// `(E, UᵀEU)` with `E = exp(AT)` for finite horizons.
        propagator: Option<(DMatrix<T>, DMatrix<T>)>,
    },
}

/// The Gramian family `W₁, …, Wₙ` of a system at a horizon.
#[derive(Debug, Clone)]
pub struct GramianBasis<T: Scalar> {
    horizon: Horizon<T>,
    system: Arc<NetworkSystem<T>>,
    storage: Storage<T>,
}

impl<T: Scalar> GramianBasis<T> {
    pub fn build(sys: &NetworkSystem<T>, horizon: Horizon<T>, opts: BasisOptions) -> Result<Self> {
        match horizon {
            Horizon::Infinite => gramian_basis_infinite(sys, opts),
            Horizon::Finite(t) => gramian_basis_finite(sys, t, opts),
        }
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn horizon(&self) -> Horizon<T> {
        self.horizon
    }

    pub fn system(&self) -> &NetworkSystem<T> {
        &self.system
    }

    pub fn storage_kind(&self) -> StorageKind {
        match self.storage {
            Storage::Explicit(_) => StorageKind::Explicit,
            Storage::Adjoint { .. } => StorageKind::Adjoint,
        }
    }

    /// The materialized Gramians, when stored explicitly.
    pub fn explicit(&self) -> Option<&[DMatrix<T>]> {
        match &self.storage {
            Storage::Explicit(w) => Some(w),
            Storage::Adjoint { .. } => None,
        }
    }

    /// `Wᵢ` (0-indexed), computed on demand in adjoint storage.
    pub fn gramian(&self, i: usize) -> Result<DMatrix<T>> {
        let n = self.n();
        if i >= n {
            return Err(Error::DimensionMismatch { expected: n, got: i + 1 });
        }
        match &self.storage {
            Storage::Explicit(w) => Ok(w[i].clone()),
            Storage::Adjoint { .. } => {
                let mut e = vec![T::zero(); n];
                e[i] = T::one();
                self.assemble(&DVector::from_vec(e))
            }
        }
    }

    /// Copy of this basis with every `Wᵢ` materialized.
    pub fn to_explicit(&self) -> Result<Self> {
        if self.explicit().is_some() {
            return Ok(self.clone());
        }
        let w = (0..self.n()).into_par_iter().map(|i| self.gramian(i)).collect::<Result<Vec<_>>>()?;
        Ok(Self { horizon: self.horizon, system: self.system.clone(), storage: Storage::Explicit(w) })
    }

    /// `W(p) = Σ pᵢ Wᵢ`.
    pub fn assemble(&self, p: &DVector<T>) -> Result<DMatrix<T>> {
        self.check_len(p.len())?;
        match &self.storage {
            Storage::Explicit(_) => self.frame_assemble(p),
            Storage::Adjoint { solver, .. } => Ok(solver.from_frame(&self.frame_assemble(p)?)),
        }
    }

    /// `vᵢ = tr(M Wᵢ)` for symmetric `M`.
    pub fn adjoint_trace_diagonal(&self, m: &DMatrix<T>) -> Result<DVector<T>> {
        self.check_len(m.nrows())?;
        self.check_len(m.ncols())?;
        match &self.storage {
            Storage::Explicit(_) => self.frame_trace(m),
            Storage::Adjoint { solver, .. } => self.frame_trace(&solver.to_frame(m)),
        }
    }

    /// `W(p)` expressed in the working frame (identity for explicit storage,
    /// the Schur frame for adjoint storage).
    pub(crate) fn frame_assemble(&self, p: &DVector<T>) -> Result<DMatrix<T>> {
        self.check_len(p.len())?;
        match &self.storage {
            Storage::Explicit(ws) => {
                let n = self.n();
                let mut acc = DMatrix::zeros(n, n);
                for (w, &pi) in ws.iter().zip(p.iter()) {
                    if pi != T::zero() {
                        acc.zip_apply(w, |a, b| *a += pi * b);
                    }
                }
                Ok(acc)
            }
            Storage::Adjoint { solver, propagator } => {
                let q = solver.diagonal_to_frame(p.as_slice());
                let rhs = match propagator {
                    None => q,
                    Some((_, ef)) => {
                        let mut r = &q - ef * &q * ef.transpose();
                        symmetrize(&mut r);
                        r
                    }
                };
                solver.solve_frame(&rhs)
            }
        }
    }

    /// `tr(M Wᵢ)` for `M` given in the working frame.
    pub(crate) fn frame_trace(&self, m: &DMatrix<T>) -> Result<DVector<T>> {
        match &self.storage {
            Storage::Explicit(ws) => Ok(DVector::from_iterator(ws.len(), ws.iter().map(|w| frobenius_inner(m, w)))),
            Storage::Adjoint { solver, propagator } => {
                let mut y = solver.solve_adjoint_frame(m)?;
                if let Some((_, ef)) = propagator {
                    y -= ef.transpose() * &y * ef;
                }
                Ok(congruence_diagonal(solver.schur_vectors(), &y))
            }
        }
    }

    /// Frobenius residual of the Lyapunov identity for `Wᵢ`, relative to `max(1, ‖A‖‖Wᵢ‖)`.
    pub fn lyapunov_residual(&self, i: usize) -> Result<T> {
        let w = self.gramian(i)?;
        lyapunov_residual_of(self.system.a(), &w, i, self.horizon)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: len });
        }
        Ok(())
    }

    /// Writes an explicit basis: header (n, horizon, SHA-256 of A) then row-major `f64` matrices.
    pub fn save_cache<W: Write>(&self, mut out: W) -> Result<()> {
        let ws = self.explicit().ok_or_else(|| Error::Cache("only explicit bases can be cached".into()))?;
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&CACHE_VERSION.to_le_bytes())?;
        out.write_all(&(self.n() as u64).to_le_bytes())?;
        let (tag, t) = match self.horizon {
            Horizon::Infinite => (0u8, 0.0),
            Horizon::Finite(t) => (1u8, t.to_f64_lossy()),
        };
        out.write_all(&[tag])?;
        out.write_all(&t.to_le_bytes())?;
        out.write_all(&matrix_hash(self.system.a()))?;
        let n = self.n();
        for w in ws {
            for r in 0..n {
                for c in 0..n {
                    out.write_all(&w[(r, c)].to_f64_lossy().to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Reads a cache written by [`save_cache`](Self::save_cache) for `sys`,
    /// rejecting it when the header does not match or `W₁` fails its Lyapunov identity.
    pub fn load_cache<R: Read>(sys: &NetworkSystem<T>, mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut input)?);
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(read_array(&mut input)?) as usize;
        if n != sys.n() {
            return Err(Error::Cache(format!("cache is for n = {n}, system has n = {}", sys.n())));
        }
        let [tag] = read_array::<1, _>(&mut input)?;
        let t = f64::from_le_bytes(read_array(&mut input)?);
        let horizon = match tag {
            0 => Horizon::Infinite,
            1 => Horizon::Finite(T::lit(t)),
            _ => return Err(Error::Cache(format!("bad horizon tag {tag}"))),
        };
        let hash: [u8; 32] = read_array(&mut input)?;
        if hash != matrix_hash(sys.a()) {
            return Err(Error::Cache("state matrix hash mismatch".into()));
        }
        let mut ws = Vec::with_capacity(n);
        for _ in 0..n {
            let mut w = DMatrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    w[(r, c)] = T::lit(f64::from_le_bytes(read_array(&mut input)?));
                }
            }
            ws.push(w);
        }
        let res = lyapunov_residual_of(sys.a(), &ws[0], 0, horizon)?;
        if !(res.to_f64_lossy() <= CACHE_RESIDUAL_TOL) {
            return Err(Error::Cache(format!("W₁ Lyapunov residual {:e} exceeds tolerance", res.to_f64_lossy())));
        }
        Ok(Self { horizon, system: Arc::new(sys.clone()), storage: Storage::Explicit(ws) })
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn matrix_hash<T: Scalar>(a: &DMatrix<T>) -> [u8; 32] {
    let mut h = Sha256::new();
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            h.update(a[(r, c)].to_f64_lossy().to_le_bytes());
        }
    }
    let digest = h.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(digest.as_slice());
    out
}

fn lyapunov_residual_of<T: Scalar>(a: &DMatrix<T>, w: &DMatrix<T>, i: usize, horizon: Horizon<T>) -> Result<T> {
    let n = a.nrows();
    let mut rhs = DMatrix::zeros(n, n);
    rhs[(i, i)] = T::one();
    if let Horizon::Finite(t) = horizon {
        let e = matrix_exponential(a, t)?;
        let col = e.column(i);
        rhs -= &col * col.transpose();
    }
    let r = a * w + w * a.transpose() + rhs;
    Ok(r.norm() / (a.norm() * w.norm()).max(T::one()))
}

/// Infinite-horizon Gramians `Wᵢ = ∫₀^∞ e^{At} eᵢeᵢᵀ e^{Aᵀt} dt`; requires `A` stable.
pub fn gramian_basis_infinite<T: Scalar>(sys: &NetworkSystem<T>, opts: BasisOptions) -> Result<GramianBasis<T>> {
    let spec = default_spectral_summary(sys)?;
    if !spec.is_stable {
        return Err(Error::InfiniteHorizonUnstable { max_real_part: spec.max_real_part.to_f64_lossy() });
    }
    let solver = LyapunovSolver::new(sys.a())?;
    let n = sys.n();
    let storage = if wants_explicit(n, opts) {
        let u = solver.schur_vectors();
        let ws = (0..n)
            .into_par_iter()
            .map(|i| {
                let ui = u.row(i).transpose();
                let x = solver.solve_frame(&(&ui * ui.transpose()))?;
                Ok(solver.from_frame(&x))
            })
            .collect::<Result<Vec<_>>>()?;
        Storage::Explicit(ws)
    } else {
        Storage::Adjoint { solver, propagator: None }
    };
    Ok(GramianBasis { horizon: Horizon::Infinite, system: Arc::new(sys.clone()), storage })
}

/// Finite-horizon Gramians `Wᵢ(T) = ∫₀^T e^{At} eᵢeᵢᵀ e^{Aᵀt} dt`; any `A`.
///
/// Explicit storage uses the augmented exponential
/// `exp([[A, eᵢeᵢᵀ], [0, −Aᵀ]] T) = [[E, F], [0, E⁻ᵀ]]` with `Wᵢ(T) = F Eᵀ`.
/// Adjoint storage needs the spectra of `A` and `−A` disjoint; otherwise the
/// basis falls back to explicit storage (if allowed).
pub fn gramian_basis_finite<T: Scalar>(sys: &NetworkSystem<T>, t: T, opts: BasisOptions) -> Result<GramianBasis<T>> {
    Horizon::Finite(t).validate()?;
    let n = sys.n();
    let a = sys.a();
    let storage = if wants_explicit(n, opts) {
        Storage::Explicit(finite_explicit(a, t)?)
    } else {
        match finite_adjoint(sys, t) {
            Ok(s) => s,
            Err(e) if opts.allow_explicit_fallback => match finite_explicit(a, t) {
                Ok(ws) => Storage::Explicit(ws),
                Err(e2) => return Err(Error::BasisUnavailable(format!("adjoint: {e}; explicit: {e2}"))),
            },
            Err(e) => return Err(Error::BasisUnavailable(format!("adjoint: {e}; explicit fallback disabled"))),
        }
    };
    Ok(GramianBasis { horizon: Horizon::Finite(t), system: Arc::new(sys.clone()), storage })
}

fn wants_explicit(n: usize, opts: BasisOptions) -> bool {
    match opts.mode {
        BasisMode::Explicit => true,
        BasisMode::Adjoint => false,
        BasisMode::Auto => n <= opts.adjoint_threshold,
    }
}

fn finite_adjoint<T: Scalar>(sys: &NetworkSystem<T>, t: T) -> Result<Storage<T>> {
    let spec = default_spectral_summary(sys)?;
    if spec.common_eig_with_negation {
        return Err(Error::LyapunovIllPosed { separation: spec.min_pair_sum.to_f64_lossy() });
    }
    let solver = LyapunovSolver::new(sys.a())?;
    let e = matrix_exponential(sys.a(), t)?;
    let ef = solver.to_frame(&e);
    Ok(Storage::Adjoint { solver, propagator: Some((e, ef)) })
}

fn finite_explicit<T: Scalar>(a: &DMatrix<T>, t: T) -> Result<Vec<DMatrix<T>>> {
    let n = a.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut h = DMatrix::zeros(2 * n, 2 * n);
            h.view_mut((0, 0), (n, n)).copy_from(a);
            h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
            h[(i, n + i)] = T::one();
            let f = matrix_exponential(&h, t)?;
            let e = f.view((0, 0), (n, n));
            let top_right = f.view((0, n), (n, n));
            let mut w = top_right * e.transpose();
            symmetrize(&mut w);
            if !all_finite(&w) {
                return Err(Error::ExponentialOverflow { norm: f64::INFINITY });
            }
            Ok(w)
        })
        .collect()
}
