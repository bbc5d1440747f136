//! Low-rank matrix recovery from linear measurements.
//!
//! The central solver is [`admira::admira_solve`], a CoSaMP-style pursuit over
//! rank-one atoms. Around it sit the dense kernel ([`matcore`]), atom
//! bookkeeping ([`atoms`]), measurement operators ([`measure`]), comparison
//! algorithms ([`baselines`]), restricted-isometry diagnostics
//! ([`ripcheck`]) and the experiment driver behind the `admira` binary
//! ([`harness`]).

pub mod admira;
pub mod atoms;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod matcore;
pub mod measure;
pub mod ripcheck;

pub use crate::admira::{admira_solve, AdmiraConfig, AdmiraResult, StopReason};
pub use crate::atoms::{Atom, AtomExpansion, AtomSet};
pub use crate::error::{Error, Result};
pub use crate::matcore::DenseMatrix;
pub use crate::measure::{EntrySampler, GaussianOperator, MeasurementOperator, Operator, OperatorKind};
