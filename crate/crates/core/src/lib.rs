//! Controllability scores for selecting control nodes of linear network systems.
//!
//! For a network `ẋ = Ax + Bu` with diagonal actuation `B = diag(√p)`, the
//! volumetric score (VCS) and average-energy score (AECS) are the unique
//! minimizers over the standard simplex of `−log det W(p)` and `tr W(p)⁻¹`,
//! where `W(p) = Σ pᵢ Wᵢ` is the controllability Gramian. Finite-horizon
//! Gramians extend both scores to unstable dynamics.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below fix the usual double-precision instantiation.

pub mod centrality;
pub mod error;
pub mod gramian;
pub mod linalg;
pub mod netsys;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod scalar;
pub mod simplex;

pub use centrality::{CentralityReport, Measure, ScoreConfig, ScoreDiagnostics};
pub use error::{Error, Result};
pub use gramian::{BasisMode, BasisOptions, GramianBasis, Horizon};
pub use netsys::{NetworkSystem, Origin, SpectralSummary, UniquenessCertificate, Verdict};
pub use objective::{Feasibility, ObjectiveKind};
pub use optimizer::{OptimizerConfig, OptimizerTrace, SolveOutcome, StopReason};
pub use scalar::Scalar;
pub use simplex::ScorePoint;

pub type NetworkSystemF64 = NetworkSystem<f64>;
pub type NetworkSystemF32 = NetworkSystem<f32>;
pub type GramianBasisF64 = GramianBasis<f64>;
pub type GramianBasisF32 = GramianBasis<f32>;
pub type HorizonF64 = Horizon<f64>;
pub type ScorePointF64 = ScorePoint<f64>;
pub type OptimizerConfigF64 = OptimizerConfig<f64>;
pub type OptimizerTraceF64 = OptimizerTrace<f64>;
pub type ScoreConfigF64 = ScoreConfig<f64>;
