//! Projected gradient on the simplex with the Armijo rule along the projection arc.
//!
//! Each iteration evaluates `∇F(pₖ)`, then tries `α = α₀, α₀ρ, α₀ρ², …` until
//! `p̃ = Π_Δ(pₖ − α∇F(pₖ))` satisfies `F(p̃) ≤ F(pₖ) + σ ∇F(pₖ)ᵀ(p̃ − pₖ)`.
//! Trial points outside `X` evaluate to `+∞` and are rejected, so every
//! accepted iterate stays in the initial sublevel set. The loop stops once
//! `‖pₖ − pₖ₊₁‖ ≤ ε`.

use std::io::Write;

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramian::GramianBasis;
use crate::objective::{frame_feasibility, gradient_from_factor, value_from_factor, Feasibility, ObjectiveKind};
use crate::scalar::Scalar;
use crate::simplex::{is_member, project, ScorePoint};

#[derive(Debug, Clone)]
pub struct OptimizerConfig<T: Scalar> {
    pub epsilon: T,
    pub sigma: T,
    pub rho: T,
    pub alpha0: T,
    pub max_iters: usize,
    pub max_backtracks: usize,
    /// Start point (uniform when `None`); must lie on the simplex and be feasible.
    pub start: Option<DVector<T>>,
    /// Start each line search from the previous step instead of `alpha0`.
    pub warm_start: bool,
    /// Keep every `k`-th iterate in the trace (0 keeps none, 1 keeps all).
    pub record_every: usize,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(1e-4),
            sigma: T::lit(1e-4),
            rho: T::lit(0.5),
            alpha0: T::one(),
            max_iters: 100_000,
            max_backtracks: 60,
            start: None,
            warm_start: false,
            record_every: 1,
        }
    }
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x > T::zero() && x < T::one();
        if !unit(self.sigma) || !unit(self.rho) {
            return Err(Error::InvalidInput("sigma and rho must lie in (0, 1)".into()));
        }
        if !(self.alpha0 > T::zero()) || !self.alpha0.is_finite_value() {
            return Err(Error::InvalidInput("alpha0 must be positive".into()));
        }
        if !(self.epsilon >= T::zero()) {
            return Err(Error::InvalidInput("epsilon must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    EpsilonStationary,
    MaxIters,
}

/// Iteration history. `objective_values[0]` is `F(p⁽⁰⁾)`; the other vectors
/// have one entry per iteration.
#[derive(Debug, Clone)]
pub struct OptimizerTrace<T: Scalar> {
    pub iterates: Vec<ScorePoint<T>>,
    pub objective_values: Vec<T>,
    pub step_sizes: Vec<T>,
    pub step_norms: Vec<T>,
    pub armijo_backtracks: Vec<usize>,
    pub stop_reason: StopReason,
    /// `‖p − Π_Δ(p − ∇F(p))‖` at the returned point.
    pub stationarity_residual: T,
    pub objective_evaluations: usize,
    pub gradient_evaluations: usize,
}

impl<T: Scalar> OptimizerTrace<T> {
    pub fn iterations(&self) -> usize {
        self.step_sizes.len()
    }

    /// One JSON object per iteration: `{"k", "f", "alpha", "step_norm"}`, plus
    /// `"measure"` when a label is given.
    pub fn write_json_lines<W: Write>(&self, mut out: W, label: Option<&str>) -> Result<()> {
        for k in 0..self.iterations() {
            let mut line = serde_json::json!({
                "k": k + 1,
                "f": self.objective_values[k + 1].to_f64_lossy(),
                "alpha": self.step_sizes[k].to_f64_lossy(),
                "step_norm": self.step_norms[k].to_f64_lossy(),
            });
            if let Some(m) = label {
                line["measure"] = m.into();
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Convergence curve rows `[label,]k,f,alpha,step_norm,backtracks`; k = 0 is the start.
    pub fn write_convergence_rows<W: Write>(&self, w: &mut csv::Writer<W>, label: Option<&str>) -> Result<()> {
        let mut row = |fields: [String; 5]| -> Result<()> {
            match label {
                Some(m) => w.write_record(std::iter::once(m.to_string()).chain(fields))?,
                None => w.write_record(fields)?,
            }
            Ok(())
        };
        row(["0".into(), self.objective_values[0].to_f64_lossy().to_string(), String::new(), String::new(), String::new()])?;
        for k in 0..self.iterations() {
            row([
                (k + 1).to_string(),
                self.objective_values[k + 1].to_f64_lossy().to_string(),
                self.step_sizes[k].to_f64_lossy().to_string(),
                self.step_norms[k].to_f64_lossy().to_string(),
                self.armijo_backtracks[k].to_string(),
            ])?;
        }
        Ok(())
    }

    /// Convergence curve as CSV with a header row.
    pub fn write_convergence_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CONVERGENCE_HEADER)?;
        self.write_convergence_rows(&mut w, None)?;
        w.flush()?;
        Ok(())
    }
}

pub const CONVERGENCE_HEADER: [&str; 5] = ["k", "f", "alpha", "step_norm", "backtracks"];

/// Accepted Armijo step.
#[derive(Debug, Clone)]
pub struct ArmijoStep<T: Scalar> {
    pub alpha: T,
    pub point: ScorePoint<T>,
    pub value: T,
    pub backtracks: usize,
}

struct Accepted<T: Scalar> {
    step: ArmijoStep<T>,
    factor: Cholesky<T, Dyn>,
    evaluations: usize,
}

fn armijo_search<T: Scalar>(
    kind: ObjectiveKind,
    basis: &GramianBasis<T>,
    p: &DVector<T>,
    value: T,
    grad: &DVector<T>,
    alpha_start: T,
    cfg: &OptimizerConfig<T>,
) -> Result<Accepted<T>> {
    let mut alpha = alpha_start;
    for backtracks in 0..=cfg.max_backtracks {
        let q = p - grad * alpha;
        let mut trial = project(&q);
        // p̃ = p up to the rounding of the projection: a zero step
        if (&trial.p - p).amax() <= T::lit(8.0) * T::machine_epsilon() * q.amax().max(T::one()) {
            trial.p.copy_from(p);
            trial.sum = p.sum();
        }
        if let Feasibility::Feasible(chol, ev) = frame_feasibility(basis, &trial.p)? {
            let trial_value = value_from_factor(kind, &chol);
            let decrease = cfg.sigma * grad.dot(&(&trial.p - p));
            if trial_value <= value + decrease {
                let step = ArmijoStep { alpha, point: trial.with_evidence(ev), value: trial_value, backtracks };
                return Ok(Accepted { step, factor: chol, evaluations: backtracks + 1 });
            }
        }
        alpha *= cfg.rho;
    }
    Err(Error::LineSearchStalled { backtracks: cfg.max_backtracks })
}

/// One Armijo line search from `p` along `−grad`, starting at `cfg.alpha0`.
pub fn armijo_step<T: Scalar>(
    kind: ObjectiveKind,
    basis: &GramianBasis<T>,
    p: &ScorePoint<T>,
    grad: &DVector<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<ArmijoStep<T>> {
    cfg.validate()?;
    let value = match frame_feasibility(basis, &p.p)? {
        Feasibility::Feasible(chol, _) => value_from_factor(kind, &chol),
        Feasibility::Infeasible => return Err(Error::Infeasible),
    };
    Ok(armijo_search(kind, basis, &p.p, value, grad, cfg.alpha0, cfg)?.step)
}

#[derive(Debug, Clone)]
pub struct SolveOutcome<T: Scalar> {
    pub point: ScorePoint<T>,
    pub trace: OptimizerTrace<T>,
}

/// `‖p − Π_Δ(p − ∇F(p))‖`.
pub fn stationarity_residual<T: Scalar>(p: &DVector<T>, grad: &DVector<T>) -> T {
    (p - project(&(p - grad)).p).norm()
}

/// Minimizes `F` over the simplex from `cfg.start` (uniform by default).
pub fn solve<T: Scalar>(kind: ObjectiveKind, basis: &GramianBasis<T>, cfg: &OptimizerConfig<T>) -> Result<SolveOutcome<T>> {
    cfg.validate()?;
    let n = basis.n();
    let start = match &cfg.start {
        None => ScorePoint::uniform(n),
        Some(p0) => {
            if p0.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: p0.len() });
            }
            if !is_member(p0, T::lit(1e-10)) {
                return Err(Error::InvalidInput("start point is not on the simplex".into()));
            }
            project(p0)
        }
    };
    let (mut factor, ev) = match frame_feasibility(basis, &start.p)? {
        Feasibility::Feasible(chol, ev) => (chol, ev),
        Feasibility::Infeasible => return Err(Error::Infeasible),
    };
    let mut point = start.with_evidence(ev);
    let mut value = value_from_factor(kind, &factor);

    let mut trace = OptimizerTrace {
        iterates: Vec::new(),
        objective_values: vec![value],
        step_sizes: Vec::new(),
        step_norms: Vec::new(),
        armijo_backtracks: Vec::new(),
        stop_reason: StopReason::MaxIters,
        stationarity_residual: T::infinity(),
        objective_evaluations: 1,
        gradient_evaluations: 0,
    };
    if cfg.record_every > 0 {
        trace.iterates.push(point.clone());
    }

    let mut alpha = cfg.alpha0;
    let mut grad = gradient_from_factor(kind, basis, &factor)?;
    trace.gradient_evaluations += 1;
    for k in 0..cfg.max_iters {
        let alpha_start = if cfg.warm_start { alpha } else { cfg.alpha0 };
        let acc = armijo_search(kind, basis, &point.p, value, &grad, alpha_start, cfg)?;
        trace.objective_evaluations += acc.evaluations;
        let step_norm = (&point.p - &acc.step.point.p).norm();
        alpha = acc.step.alpha;
        point = acc.step.point;
        value = acc.step.value;
        factor = acc.factor;
        trace.objective_values.push(value);
        trace.step_sizes.push(alpha);
        trace.step_norms.push(step_norm);
        trace.armijo_backtracks.push(acc.step.backtracks);
        if cfg.record_every > 0 && (k + 1) % cfg.record_every == 0 {
            trace.iterates.push(point.clone());
        }
        grad = gradient_from_factor(kind, basis, &factor)?;
        trace.gradient_evaluations += 1;
        if step_norm <= cfg.epsilon {
            trace.stop_reason = StopReason::EpsilonStationary;
            break;
        }
    }
    trace.stationarity_residual = stationarity_residual(&point.p, &grad);
    Ok(SolveOutcome { point, trace })
}
