//! Reference algorithms for comparison with ADMiRA.
//!
//! [`rank_one_pursuit`] adds one atom per iteration (matching pursuit or
//! orthogonal matching pursuit over rank-one atoms). [`svt_solve`] is singular
//! value thresholding for matrix completion. Both report an
//! [`AdmiraResult`] so the harness can treat all solvers alike.

use std::fmt;
use std::str::FromStr;

use crate::admira::{check_measurements, restricted_least_squares, AdmiraResult, StopReason, TraceEntry};
use crate::atoms::{leading_atoms, merge, Atom, AtomExpansion, AtomSet, COLLINEAR_TOL};
use crate::error::{Error, Result};
use crate::matcore::{dot, norm2, svd, DenseMatrix, DEFAULT_RANK_TOL};
use crate::measure::MeasurementOperator;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PursuitVariant {
    /// Only the newly selected coefficient is set; earlier ones are frozen.
    Mp,
    /// All coefficients are refit by least squares after each selection.
    #[default]
    Omp,
}

impl fmt::Display for PursuitVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PursuitVariant::Mp => "mp",
            PursuitVariant::Omp => "omp",
        })
    }
}

impl FromStr for PursuitVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mp" => Ok(PursuitVariant::Mp),
            "omp" => Ok(PursuitVariant::Omp),
            _ => Err(Error::InvalidArgument(format!("unknown pursuit variant '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PursuitConfig {
    /// Iteration cap; for OMP this is also the largest number of atoms kept.
    pub max_atoms: usize,
    pub residual_tol: f64,
    pub variant: PursuitVariant,
}

impl PursuitConfig {
    pub fn new(max_atoms: usize, variant: PursuitVariant) -> Self {
        Self {
            max_atoms,
            residual_tol: 1e-7,
            variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_atoms == 0 {
            return Err(Error::InvalidArgument("max_atoms must be positive".into()));
        }
        if !(self.residual_tol > 0.0 && self.residual_tol.is_finite()) {
            return Err(Error::InvalidArgument("residual_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Greedy recovery one rank-one atom at a time.
///
/// Each iteration takes the top singular pair of the proxy `A*(b - A Xhat)`.
/// The MP coefficient is `<proxy, psi> / |A psi|^2`, the exact line search
/// along the new atom, which is also the single-atom least-squares fit, so
/// MP and OMP agree on the first iteration. Re-selecting an atom already in
/// the support adds to its coefficient.
pub fn rank_one_pursuit(
    op: &dyn MeasurementOperator,
    b: &[f64],
    config: &PursuitConfig,
) -> Result<AdmiraResult> {
    config.validate()?;
    check_measurements(op, b)?;
    let (rows, cols) = (op.rows(), op.cols());
    let bnorm = norm2(b);
    let mut estimate = AtomExpansion::zero(rows, cols);
    let mut residual = b.to_vec();
    let mut trace = Vec::new();

    let stop = loop {
        if trace.len() >= config.max_atoms {
            break StopReason::MaxIter;
        }
        let proxy = op.adjoint(&residual)?;
        let top = leading_atoms(&proxy, 1)?;
        let Some(atom) = top.set().iter().next().cloned() else {
            break StopReason::ZeroProxy;
        };
        estimate = match config.variant {
            PursuitVariant::Omp => {
                let single = AtomSet::new_unchecked(vec![atom]);
                let support = merge(estimate.set(), &single);
                if support.len() == estimate.len() {
                    break StopReason::Stalled;
                }
                restricted_least_squares(op, b, &support, DEFAULT_RANK_TOL)?
            }
            PursuitVariant::Mp => {
                let image = op.apply_atom(&atom);
                let energy = dot(&image, &image);
                if energy == 0.0 {
                    break StopReason::ZeroProxy;
                }
                mp_update(estimate, atom, top.coeffs()[0] / energy)?
            }
        };
        let fitted = op.apply_expansion(&estimate)?;
        residual = b.iter().zip(&fitted).map(|(x, y)| x - y).collect();
        let res = norm2(&residual);
        let rel = if bnorm > 0.0 { res / bnorm } else { 0.0 };
        trace.push(TraceEntry {
            iter: trace.len() + 1,
            residual_l2: res,
            rel_residual: rel,
            error_fro: None,
        });
        if rel <= config.residual_tol {
            break StopReason::Converged;
        }
    };

    let rank = estimate.len();
    Ok(AdmiraResult {
        estimate,
        trace,
        stop,
        rank,
    })
}

fn mp_update(estimate: AtomExpansion, atom: Atom, coeff: f64) -> Result<AtomExpansion> {
    let (rows, cols) = estimate.shape();
    let (set, mut coeffs) = estimate.into_parts();
    let mut atoms: Vec<Atom> = set.atoms().to_vec();
    match atoms
        .iter()
        .position(|a| a.inner(&atom).abs() > 1.0 - COLLINEAR_TOL)
    {
        Some(i) => coeffs[i] += atoms[i].inner(&atom).signum() * coeff,
        None => {
            atoms.push(atom);
            coeffs.push(coeff);
        }
    }
    AtomExpansion::new(rows, cols, AtomSet::new_unchecked(atoms), coeffs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvtConfig {
    /// Singular value threshold `tau`.
    pub tau: f64,
    /// Dual step size `delta`.
    pub step: f64,
    pub max_iter: usize,
    /// Stop once `|b - A X|_2 <= residual_tol * |b|_2`.
    pub residual_tol: f64,
}

impl SvtConfig {
    /// Common choices from the SVT literature: `tau = 5 sqrt(rows cols)` and
    /// `delta = 1.2 rows cols / p`. The residual tolerance matches ADMiRA's.
    pub fn for_problem(rows: usize, cols: usize, p: usize) -> Self {
        let mn = (rows * cols) as f64;
        Self {
            tau: 5.0 * mn.sqrt(),
            step: 1.2 * mn / p.max(1) as f64,
            max_iter: 1000,
            residual_tol: 1e-7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("step", self.step),
            ("residual_tol", self.residual_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Singular value thresholding on an entry-sampling operator.
///
/// ```text
/// Y_0 = k0 delta A*b,  k0 = ceil(tau / (delta |A*b|_2))
/// X_k = shrink_tau(Y_{k-1})
/// Y_k = Y_{k-1} + delta A*(b - A X_k)
/// ```
///
/// `b = 0` returns the zero matrix with an empty trace.
pub fn svt_solve(
    op: &dyn MeasurementOperator,
    b: &[f64],
    config: &SvtConfig,
) -> Result<AdmiraResult> {
    let Some(sampler) = op.as_sampler() else {
        return Err(Error::UnsupportedOperator(format!(
            "singular value thresholding needs an entry sampler, got {}",
            op.kind()
        )));
    };
    config.validate()?;
    check_measurements(sampler, b)?;
    let (rows, cols) = (sampler.rows(), sampler.cols());
    let bnorm = norm2(b);
    let mut trace = Vec::new();
    let zero = AtomExpansion::zero(rows, cols);
    if bnorm == 0.0 {
        return Ok(AdmiraResult {
            estimate: zero,
            trace,
            stop: StopReason::ZeroProxy,
            rank: 0,
        });
    }

    let data = sampler.adjoint(b)?;
    let spectral = svd(&data)?.sigma[0];
    let k0 = (config.tau / (config.step * spectral)).ceil().max(1.0);
    let mut y = data.scaled(k0 * config.step);
    let mut estimate = zero;

    let stop = loop {
        if trace.len() >= config.max_iter {
            break StopReason::MaxIter;
        }
        estimate = shrink(&y, config.tau)?;
        let fitted = sampler.apply_expansion(&estimate)?;
        let resid: Vec<f64> = b.iter().zip(&fitted).map(|(x, f)| x - f).collect();
        let res = norm2(&resid);
        let rel = res / bnorm;
        trace.push(TraceEntry {
            iter: trace.len() + 1,
            residual_l2: res,
            rel_residual: rel,
            error_fro: None,
        });
        if rel <= config.residual_tol {
            break StopReason::Converged;
        }
        for (&(r, c), d) in sampler.indices().iter().zip(&resid) {
            y[(r, c)] += config.step * d;
        }
    };

    let rank = estimate.len();
    Ok(AdmiraResult {
        estimate,
        trace,
        stop,
        rank,
    })
}

/// `sum_i max(sigma_i - tau, 0) u_i v_i^T` as an expansion.
fn shrink(y: &DenseMatrix, tau: f64) -> Result<AtomExpansion> {
    let f = svd(y)?;
    let keep = f.sigma.iter().take_while(|&&s| s > tau).count();
    let atoms = (0..keep)
        .map(|i| Atom::from_unit(f.u_col(i), f.v_col(i)))
        .collect();
    let coeffs = f.sigma[..keep].iter().map(|s| s - tau).collect();
    AtomExpansion::new(y.rows(), y.cols(), AtomSet::new_unchecked(atoms), coeffs)
}
