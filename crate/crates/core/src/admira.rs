//! Atomic decomposition for minimum rank approximation.
//!
//! Each iteration forms the proxy `A*(b - A X)`, takes its best `2r` atoms,
//! merges them with the current `r` atoms, fits the measurements by least
//! squares over the merged span, and keeps the best rank-`r` part of the fit:
//!
//! ```text
//! Psi'  = leading_atoms(A*(b - A Xhat), 2r)
//! Psi~  = Psi' ∪ Psi_hat
//! X~    = argmin { |b - A X|_2 : X in span(Psi~) }
//! Xhat  = best rank-r approximation of X~
//! ```
//!
//! Iterates stay in factored form throughout; the only dense `rows x cols`
//! matrix built per iteration is the proxy.

use std::fmt;
use std::io::Write;

use crate::atoms::{leading_atoms, merge, truncate_expansion, AtomExpansion, AtomSet};
use crate::error::{dim_mismatch, Error, Result};
use crate::matcore::{
    frobenius_norm, least_squares_minnorm, norm2, svd, DenseMatrix, DEFAULT_RANK_TOL,
};
use crate::measure::{format_full, MeasurementOperator};

/// Number of trailing iterations compared by the stall rule.
pub const STALL_WINDOW: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct AdmiraConfig {
    /// Target rank `r`.
    pub rank: usize,
    pub max_iter: usize,
    /// Stop once `|b - A Xhat|_2 <= residual_tol * |b|_2`.
    pub residual_tol: f64,
    /// Stop once the residual moved by less than this fraction over
    /// [`STALL_WINDOW`] iterations.
    pub stall_tol: f64,
    pub ls_rank_tol: f64,
}

impl AdmiraConfig {
    /// Defaults for rank `r`; `max_iter = 6 (r + 1)`.
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_iter: 6 * (rank + 1),
            residual_tol: 1e-7,
            stall_tol: 1e-6,
            ls_rank_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_residual_tol(mut self, tol: f64) -> Self {
        self.residual_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        for (name, v) in [
            ("residual_tol", self.residual_tol),
            ("stall_tol", self.stall_tol),
            ("ls_rank_tol", self.ls_rank_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIter,
    Stalled,
    ZeroProxy,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::MaxIter => "max_iter",
            StopReason::Stalled => "stalled",
            StopReason::ZeroProxy => "zero_proxy",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub residual_l2: f64,
    pub rel_residual: f64,
    /// `|X - Xhat|_F` when the true matrix was supplied.
    pub error_fro: Option<f64>,
}

/// Loop state between iterations.
#[derive(Clone, Debug)]
pub struct AdmiraState {
    /// Current rank-`r` estimate; its atom set is the current `Psi_hat`.
    pub estimate: AtomExpansion,
    /// Completed iterations.
    pub iteration: usize,
    /// `b - A * estimate`.
    pub residual: Vec<f64>,
    /// Merged set used by the most recent least-squares fit.
    pub merged: AtomSet,
    /// Set when the last attempted step found nothing to select.
    pub zero_proxy: bool,
}

impl AdmiraState {
    /// `Xhat = 0`, `Psi_hat = {}`.
    pub fn initial(rows: usize, cols: usize, b: &[f64]) -> Self {
        Self {
            estimate: AtomExpansion::zero(rows, cols),
            iteration: 0,
            residual: b.to_vec(),
            merged: AtomSet::empty(),
            zero_proxy: false,
        }
    }

    pub fn residual_norm(&self) -> f64 {
        norm2(&self.residual)
    }
}

#[derive(Clone, Debug)]
pub struct AdmiraResult {
    pub estimate: AtomExpansion,
    pub trace: Vec<TraceEntry>,
    pub stop: StopReason,
    /// Rank used by the solve that produced this result.
    pub rank: usize,
}

impl AdmiraResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.trace.last().map(|t| t.residual_l2)
    }

    pub fn final_rel_residual(&self) -> Option<f64> {
        self.trace.last().map(|t| t.rel_residual)
    }

    /// CSV with header `iter,residual_l2,rel_residual,error_fro`; the last
    /// column is left empty when no truth was supplied.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], mut out: W) -> Result<()> {
    writeln!(out, "iter,residual_l2,rel_residual,error_fro")?;
    for t in trace {
        let err = t.error_fro.map(format_full).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            t.iter,
            format_full(t.residual_l2),
            format_full(t.rel_residual),
            err
        )?;
    }
    Ok(())
}

/// `A*(b - A xhat)`.
pub fn proxy(op: &dyn MeasurementOperator, b: &[f64], xhat: &AtomExpansion) -> Result<DenseMatrix> {
    check_measurements(op, b)?;
    let fitted = op.apply_expansion(xhat)?;
    let resid: Vec<f64> = b.iter().zip(&fitted).map(|(x, y)| x - y).collect();
    op.adjoint(&resid)
}

/// Least-squares fit of `b` over `span(set)`.
///
/// Builds `Phi` with column `j = A psi_j` and solves for the minimum-norm
/// coefficients, so duplicate or dependent atoms are harmless.
pub fn restricted_least_squares(
    op: &dyn MeasurementOperator,
    b: &[f64],
    set: &AtomSet,
    ls_rank_tol: f64,
) -> Result<AtomExpansion> {
    check_measurements(op, b)?;
    if set.is_empty() {
        return Err(Error::InvalidArgument(
            "restricted least squares needs at least one atom".into(),
        ));
    }
    let columns: Vec<Vec<f64>> = set.iter().map(|a| op.apply_atom(a)).collect();
    let phi = DenseMatrix::from_columns(op.num_measurements(), &columns);
    let alpha = least_squares_minnorm(&phi, b, ls_rank_tol)?;
    AtomExpansion::new(op.rows(), op.cols(), set.clone(), alpha)
}

/// One pass of the selection / merge / fit / truncate cycle.
///
/// When the proxy is identically zero nothing is selected; the state is
/// returned unchanged with `zero_proxy` set.
pub fn admira_step(
    state: AdmiraState,
    op: &dyn MeasurementOperator,
    b: &[f64],
    config: &AdmiraConfig,
) -> Result<AdmiraState> {
    check_measurements(op, b)?;
    let r = config.rank;
    let proxy = op.adjoint(&state.residual)?;
    let proposal = leading_atoms(&proxy, 2 * r)?;
    if proposal.is_empty() {
        return Ok(AdmiraState {
            zero_proxy: true,
            ..state
        });
    }
    let merged = merge(proposal.set(), state.estimate.set());
    let fit = restricted_least_squares(op, b, &merged, config.ls_rank_tol)?;
    let estimate = truncate_expansion(&fit, r)?;
    let fitted = op.apply_expansion(&estimate)?;
    let residual = b.iter().zip(&fitted).map(|(x, y)| x - y).collect();
    Ok(AdmiraState {
        estimate,
        iteration: state.iteration + 1,
        residual,
        merged,
        zero_proxy: false,
    })
}

/// Runs the loop until convergence, stall, zero proxy or `max_iter`.
///
/// `truth` only adds `error_fro` to the trace; it never affects control flow.
pub fn admira_solve(
    op: &dyn MeasurementOperator,
    b: &[f64],
    config: &AdmiraConfig,
    truth: Option<&DenseMatrix>,
) -> Result<AdmiraResult> {
    config.validate()?;
    check_measurements(op, b)?;
    if let Some(t) = truth {
        op.check_shape(t.rows(), t.cols())?;
    }
    let bnorm = norm2(b);
    let mut state = AdmiraState::initial(op.rows(), op.cols(), b);
    let mut trace: Vec<TraceEntry> = Vec::new();

    let stop = loop {
        if state.iteration >= config.max_iter {
            break StopReason::MaxIter;
        }
        state = admira_step(state, op, b, config)?;
        if state.zero_proxy {
            break StopReason::ZeroProxy;
        }
        let res = state.residual_norm();
        let rel = if bnorm > 0.0 { res / bnorm } else { 0.0 };
        let error_fro = truth.map(|t| frobenius_norm(&t.sub(&state.estimate.assemble())));
        trace.push(TraceEntry {
            iter: state.iteration,
            residual_l2: res,
            rel_residual: rel,
            error_fro,
        });
        if rel <= config.residual_tol {
            break StopReason::Converged;
        }
        if stalled(&trace, config.stall_tol) {
            break StopReason::Stalled;
        }
    };

    Ok(AdmiraResult {
        estimate: state.estimate,
        trace,
        stop,
        rank: config.rank,
    })
}

pub(crate) fn stalled(trace: &[TraceEntry], stall_tol: f64) -> bool {
    if trace.len() <= STALL_WINDOW {
        return false;
    }
    let now = trace[trace.len() - 1].residual_l2;
    let then = trace[trace.len() - 1 - STALL_WINDOW].residual_l2;
    (then - now).abs() <= stall_tol * then
}

pub(crate) fn check_measurements(op: &dyn MeasurementOperator, b: &[f64]) -> Result<()> {
    if b.len() != op.num_measurements() {
        return Err(dim_mismatch(op.num_measurements(), b.len()));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("measurement vector contains NaN or Inf".into()));
    }
    Ok(())
}

/// `eps = |X - X_r|_F + |X - X_r|_* / sqrt(r) + |nu|_2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnrecoverableEnergy {
    pub value: f64,
    pub tail_fro: f64,
    /// `|X - X_r|_* / sqrt(r)`.
    pub tail_nuclear_scaled: f64,
    pub noise: f64,
}

pub fn unrecoverable_energy(x: &DenseMatrix, r: usize, nu: &[f64]) -> Result<UnrecoverableEnergy> {
    if r == 0 {
        return Err(Error::InvalidArgument("rank must be positive".into()));
    }
    let sigma = svd(x)?.sigma;
    let tail = sigma.get(r..).unwrap_or(&[]);
    let tail_fro = tail.iter().map(|s| s * s).sum::<f64>().sqrt();
    let tail_nuclear_scaled = tail.iter().sum::<f64>() / (r as f64).sqrt();
    let noise = norm2(nu);
    Ok(UnrecoverableEnergy {
        value: tail_fro + tail_nuclear_scaled + noise,
        tail_fro,
        tail_nuclear_scaled,
        noise,
    })
}
