//! Scoring API: VCS, AECS, their observability duals, the VCE/ACE baselines
//! and ranked reports.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gramian::{BasisMode, BasisOptions, GramianBasis, Horizon};
use crate::linalg::symmetric_eigenvalues;
use crate::netsys::{uniqueness_certificate, NetworkSystem, UniquenessCertificate, Verdict};
use crate::objective::{value_from_factor, ObjectiveKind};
use crate::optimizer::{solve, OptimizerConfig, OptimizerTrace, StopReason};
use crate::scalar::Scalar;
use crate::simplex::{FeasibilityEvidence, ScorePoint};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Vcs,
    Aecs,
    Vce,
    Ace,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Vcs, Measure::Aecs, Measure::Vce, Measure::Ace];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Vcs => "vcs",
            Measure::Aecs => "aecs",
            Measure::Vce => "vce",
            Measure::Ace => "ace",
        }
    }

    /// The optimization objective behind a score measure.
    pub fn objective(self) -> Option<ObjectiveKind> {
        match self {
            Measure::Vcs => Some(ObjectiveKind::Volumetric),
            Measure::Aecs => Some(ObjectiveKind::AverageEnergy),
            Measure::Vce | Measure::Ace => None,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vcs" => Ok(Measure::Vcs),
            "aecs" => Ok(Measure::Aecs),
            "vce" => Ok(Measure::Vce),
            "ace" => Ok(Measure::Ace),
            "cc" => Err(Error::Unsupported("CC unsupported (out of scope)".into())),
            other => Err(Error::InvalidInput(format!("unknown measure '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreConfig<T: Scalar> {
    pub optimizer: OptimizerConfig<T>,
    pub basis: BasisOptions,
    /// Eigenvalues at or below `rank_tol · λ_max(Wᵢ)` count as zero in VCE/ACE.
    pub rank_tol: T,
    /// Score observability instead (run everything on `Aᵀ`).
    pub dual: bool,
}

impl<T: Scalar> Default for ScoreConfig<T> {
    fn default() -> Self {
        Self { optimizer: OptimizerConfig::default(), basis: BasisOptions::default(), rank_tol: T::lit(DEFAULT_RANK_TOL), dual: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDiagnostics {
    pub verdict: Verdict,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub stationarity_residual: f64,
    pub objective: f64,
    pub feasibility: Option<FeasibilityEvidence>,
}

/// A converged score with its trace and diagnostics.
#[derive(Debug, Clone)]
pub struct Scored<T: Scalar> {
    pub point: ScorePoint<T>,
    pub trace: OptimizerTrace<T>,
    pub diagnostics: ScoreDiagnostics,
}

fn oriented<'a, T: Scalar>(sys: &'a NetworkSystem<T>, dual: bool) -> Cow<'a, NetworkSystem<T>> {
    if dual {
        Cow::Owned(sys.transposed())
    } else {
        Cow::Borrowed(sys)
    }
}

/// Solves one scoring problem on a prebuilt basis.
pub fn score_on_basis<T: Scalar>(
    kind: ObjectiveKind,
    basis: &GramianBasis<T>,
    verdict: Verdict,
    cfg: &OptimizerConfig<T>,
) -> Result<Scored<T>> {
    let out = solve(kind, basis, cfg)?;
    let diagnostics = ScoreDiagnostics {
        verdict,
        iterations: out.trace.iterations(),
        stop_reason: out.trace.stop_reason,
        stationarity_residual: out.trace.stationarity_residual.to_f64_lossy(),
        objective: out.trace.objective_values.last().map_or(f64::NAN, |v| v.to_f64_lossy()),
        feasibility: out.point.feasible,
    };
    Ok(Scored { point: out.point, trace: out.trace, diagnostics })
}

/// Scores of `kind` on `sys` (or on `Aᵀ` when `cfg.dual`).
pub fn score<T: Scalar>(sys: &NetworkSystem<T>, kind: ObjectiveKind, horizon: Horizon<T>, cfg: &ScoreConfig<T>) -> Result<Scored<T>> {
    let sys = oriented(sys, cfg.dual);
    let cert = uniqueness_certificate(&sys, horizon)?;
    let basis = GramianBasis::build(&sys, horizon, cfg.basis)?;
    score_on_basis(kind, &basis, cert.verdict, &cfg.optimizer)
}

/// Volumetric controllability scores.
pub fn vcs<T: Scalar>(sys: &NetworkSystem<T>, horizon: Horizon<T>, cfg: &ScoreConfig<T>) -> Result<(DVector<T>, ScoreDiagnostics)> {
    let s = score(sys, ObjectiveKind::Volumetric, horizon, cfg)?;
    Ok((s.point.p, s.diagnostics))
}

/// Average-energy controllability scores.
pub fn aecs<T: Scalar>(sys: &NetworkSystem<T>, horizon: Horizon<T>, cfg: &ScoreConfig<T>) -> Result<(DVector<T>, ScoreDiagnostics)> {
    let s = score(sys, ObjectiveKind::AverageEnergy, horizon, cfg)?;
    Ok((s.point.p, s.diagnostics))
}

/// Observability scores: the controllability scores of `Aᵀ`.
pub fn observability_scores<T: Scalar>(
    sys: &NetworkSystem<T>,
    kind: ObjectiveKind,
    horizon: Horizon<T>,
    cfg: &ScoreConfig<T>,
) -> Result<(DVector<T>, ScoreDiagnostics)> {
    let cfg = ScoreConfig { dual: !cfg.dual, ..cfg.clone() };
    let s = score(sys, kind, horizon, &cfg)?;
    Ok((s.point.p, s.diagnostics))
}

/// Nonzero spectrum of `Wᵢ` under the rank cutoff, or its Cholesky factor when `Wᵢ` has full rank.
///
/// Cholesky is insensitive to diagonal scaling, so full-rank values keep their
/// accuracy on the badly graded single-node Gramians that random networks produce.
enum NodeSpectrum<T: Scalar> {
    Full(nalgebra::Cholesky<T, nalgebra::Dyn>),
    Partial(Vec<T>),
}

fn node_spectrum<T: Scalar>(basis: &GramianBasis<T>, i: usize, rank_tol: T) -> Result<NodeSpectrum<T>> {
    let w = basis.gramian(i)?;
    let vals = symmetric_eigenvalues(&w)?;
    let top = vals.last().copied().unwrap_or_else(T::zero);
    if !(top > T::zero()) {
        return Ok(NodeSpectrum::Partial(Vec::new()));
    }
    let kept: Vec<T> = vals.into_iter().filter(|&v| v > rank_tol * top).collect();
    if kept.len() == basis.n() {
        if let Some(chol) = nalgebra::Cholesky::new(w) {
            return Ok(NodeSpectrum::Full(chol));
        }
    }
    Ok(NodeSpectrum::Partial(kept))
}

/// `C_VCE(i) = Σ log λⱼ(Wᵢ)` over the nonzero eigenvalues; `−∞` when `Wᵢ = O`.
pub fn vce_on_basis<T: Scalar>(basis: &GramianBasis<T>, rank_tol: T) -> Result<DVector<T>> {
    let mut out = DVector::zeros(basis.n());
    for i in 0..basis.n() {
        out[i] = match node_spectrum(basis, i, rank_tol)? {
            NodeSpectrum::Full(chol) => -value_from_factor(ObjectiveKind::Volumetric, &chol),
            NodeSpectrum::Partial(vals) if vals.is_empty() => -T::infinity(),
            NodeSpectrum::Partial(vals) => vals.iter().fold(T::zero(), |s, &v| s + v.ln()),
        };
    }
    Ok(out)
}

/// `C_ACE(i) = −tr(Wᵢ†)`.
pub fn ace_on_basis<T: Scalar>(basis: &GramianBasis<T>, rank_tol: T) -> Result<DVector<T>> {
    let mut out = DVector::zeros(basis.n());
    for i in 0..basis.n() {
        out[i] = match node_spectrum(basis, i, rank_tol)? {
            NodeSpectrum::Full(chol) => -value_from_factor(ObjectiveKind::AverageEnergy, &chol),
            NodeSpectrum::Partial(vals) => T::zero() - vals.iter().fold(T::zero(), |s, &v| s + v.recip()),
        };
    }
    Ok(out)
}

fn explicit_basis<T: Scalar>(sys: &NetworkSystem<T>, horizon: Horizon<T>) -> Result<GramianBasis<T>> {
    GramianBasis::build(sys, horizon, BasisOptions { mode: BasisMode::Explicit, ..Default::default() })
}

pub fn vce<T: Scalar>(sys: &NetworkSystem<T>, horizon: Horizon<T>, rank_tol: T) -> Result<DVector<T>> {
    vce_on_basis(&explicit_basis(sys, horizon)?, rank_tol)
}

pub fn ace<T: Scalar>(sys: &NetworkSystem<T>, horizon: Horizon<T>, rank_tol: T) -> Result<DVector<T>> {
    ace_on_basis(&explicit_basis(sys, horizon)?, rank_tol)
}

/// Node indices sorted by descending value, ties by ascending index.
pub fn ranking(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    idx
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub certificate: Option<UniquenessCertificate>,
    pub scores: BTreeMap<Measure, ScoreDiagnostics>,
    pub errors: BTreeMap<Measure, String>,
    pub rank_tol: f64,
    pub dual: bool,
}

/// Requested measures with rankings and diagnostics. Rankings list 0-based node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    pub n: usize,
    pub horizon: Horizon<f64>,
    pub node_labels: Vec<String>,
    #[serde(with = "sentinel_map")]
    pub measures: BTreeMap<Measure, Vec<f64>>,
    pub rankings: BTreeMap<Measure, Vec<usize>>,
    pub diagnostics: ReportDiagnostics,
}

impl CentralityReport {
    pub fn values(&self, m: Measure) -> Option<&[f64]> {
        self.measures.get(&m).map(Vec::as_slice)
    }

    pub fn vcs(&self) -> Option<&[f64]> {
        self.values(Measure::Vcs)
    }

    pub fn aecs(&self) -> Option<&[f64]> {
        self.values(Measure::Aecs)
    }

    pub fn vce(&self) -> Option<&[f64]> {
        self.values(Measure::Vce)
    }

    pub fn ace(&self) -> Option<&[f64]> {
        self.values(Measure::Ace)
    }

    pub fn is_complete(&self) -> bool {
        self.diagnostics.errors.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per node: `node,label,<measure>…`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node".to_string(), "label".to_string()];
        header.extend(self.measures.keys().map(|m| m.name().to_string()));
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut row = vec![(i + 1).to_string(), self.node_labels.get(i).cloned().unwrap_or_default()];
            row.extend(self.measures.values().map(|v| sentinel_text(v[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sentinel_text(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "neg_inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

/// JSON has no infinities; non-finite values are written as strings.
mod sentinel_map {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Cell {
        Num(f64),
        Tag(String),
    }

    impl From<f64> for Cell {
        fn from(v: f64) -> Self {
            if v.is_finite() {
                Cell::Num(v)
            } else {
                Cell::Tag(sentinel_text(v))
            }
        }
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<Measure, Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let cells: BTreeMap<Measure, Vec<Cell>> =
            map.iter().map(|(k, v)| (*k, v.iter().map(|&x| Cell::from(x)).collect())).collect();
        cells.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<Measure, Vec<f64>>, D::Error> {
        let cells = BTreeMap::<Measure, Vec<Cell>>::deserialize(d)?;
        cells
            .into_iter()
            .map(|(k, v)| {
                let vals = v
                    .into_iter()
                    .map(|c| match c {
                        Cell::Num(x) => Ok(x),
                        Cell::Tag(t) => match t.as_str() {
                            "neg_inf" => Ok(f64::NEG_INFINITY),
                            "inf" => Ok(f64::INFINITY),
                            "nan" => Ok(f64::NAN),
                            other => Err(serde::de::Error::custom(format!("bad value '{other}'"))),
                        },
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok((k, vals))
            })
            .collect()
    }
}

/// Report plus the optimizer traces of the score measures.
pub struct ReportRun<T: Scalar> {
    pub report: CentralityReport,
    pub traces: BTreeMap<Measure, OptimizerTrace<T>>,
}

/// Computes the requested measures; failures land in per-measure error slots.
pub fn rank_report_with_traces<T: Scalar>(
    sys: &NetworkSystem<T>,
    measures: &[Measure],
    horizon: Horizon<T>,
    cfg: &ScoreConfig<T>,
) -> Result<ReportRun<T>> {
    if measures.is_empty() {
        return Err(Error::InvalidInput("no measures requested".into()));
    }
    horizon.validate()?;
    let sys = oriented(sys, cfg.dual);
    let n = sys.n();
    let mut wanted: Vec<Measure> = measures.to_vec();
    wanted.sort();
    wanted.dedup();

    let mut diagnostics = ReportDiagnostics { rank_tol: cfg.rank_tol.to_f64_lossy(), dual: cfg.dual, ..Default::default() };
    let mut measures_out = BTreeMap::new();
    let mut traces = BTreeMap::new();

    let setup = uniqueness_certificate(&sys, horizon).and_then(|cert| {
        let basis = GramianBasis::build(&sys, horizon, cfg.basis)?;
        Ok((cert, basis))
    });
    match setup {
        Err(e) => {
            let msg = e.to_string();
            for m in &wanted {
                diagnostics.errors.insert(*m, msg.clone());
            }
        }
        Ok((cert, basis)) => {
            let run = |m: Measure| -> Result<(Vec<f64>, Option<Scored<T>>)> {
                match m.objective() {
                    Some(kind) => {
                        let s = score_on_basis(kind, &basis, cert.verdict, &cfg.optimizer)?;
                        Ok((s.point.p.iter().map(|v| v.to_f64_lossy()).collect(), Some(s)))
                    }
                    None => {
                        let v = if m == Measure::Vce { vce_on_basis(&basis, cfg.rank_tol)? } else { ace_on_basis(&basis, cfg.rank_tol)? };
                        Ok((v.iter().map(|x| x.to_f64_lossy()).collect(), None))
                    }
                }
            };
            let results: Vec<(Measure, Result<(Vec<f64>, Option<Scored<T>>)>)> = {
                use rayon::prelude::*;
                wanted.par_iter().map(|&m| (m, run(m))).collect()
            };
            for (m, r) in results {
                match r {
                    Ok((vals, scored)) => {
                        if let Some(s) = scored {
                            diagnostics.scores.insert(m, s.diagnostics);
                            traces.insert(m, s.trace);
                        }
                        measures_out.insert(m, vals);
                    }
                    Err(e) => {
                        diagnostics.errors.insert(m, e.to_string());
                    }
                }
            }
            diagnostics.certificate = Some(cert);
        }
    }

    let rankings = measures_out.iter().map(|(m, v)| (*m, ranking(v))).collect();
    let report = CentralityReport {
        n,
        horizon: horizon.to_f64(),
        node_labels: sys.node_labels().to_vec(),
        measures: measures_out,
        rankings,
        diagnostics,
    };
    Ok(ReportRun { report, traces })
}

pub fn rank_report<T: Scalar>(
    sys: &NetworkSystem<T>,
    measures: &[Measure],
    horizon: Horizon<T>,
    cfg: &ScoreConfig<T>,
) -> Result<CentralityReport> {
    Ok(rank_report_with_traces(sys, measures, horizon, cfg)?.report)
}
