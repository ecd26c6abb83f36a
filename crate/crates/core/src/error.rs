use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },
}

/// A single broken configuration invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositive { field: &'static str },
    PilotLength { tau_p: usize, k_prime: usize, m: usize },
    PrelogNotPositive { tau_p: usize, tau_c: usize },
    TooManyPilotGroups { k_prime: usize, k: usize },
    UnevenPilotGroups { k: usize, k_prime: usize },
    PathLoss { field: &'static str, value: f64 },
    Other(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositive { field } => write!(f, "{field} must be strictly positive"),
            Violation::PilotLength { tau_p, k_prime, m } => write!(
                f,
                "tau_p = {tau_p} but K_prime * M = {k_prime} * {m} = {}",
                k_prime * m
            ),
            Violation::PrelogNotPositive { tau_p, tau_c } => write!(
                f,
                "2 * tau_p = {} must be below tau_c = {tau_c} for a positive downlink-pilot pre-log",
                2 * tau_p
            ),
            Violation::TooManyPilotGroups { k_prime, k } => {
                write!(f, "K_prime = {k_prime} exceeds K = {k}")
            }
            Violation::UnevenPilotGroups { k, k_prime } => {
                write!(f, "K = {k} is not a multiple of K_prime = {k_prime}")
            }
            Violation::PathLoss { field, value } => write!(f, "path-loss parameter {field} = {value} is invalid"),
            Violation::Other(msg) => f.write_str(msg),
        }
    }
}

/// Every invariant a configuration breaks, in check order.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(Violations),
    #[error("cannot fit {k_prime} orthogonal {m}-column pilot matrices into tau_p = {tau_p}")]
    PilotsDoNotFit { k_prime: usize, m: usize, tau_p: usize },
    #[error("calibration ensemble of {n_stat} draws is below the minimum of {min}")]
    CalibrationTooSmall { n_stat: usize, min: usize },
    #[error("precoder set is identically zero")]
    ZeroPrecoder,
    #[error("{what}: {source}")]
    Numerical { what: &'static str, source: LinalgError },
    #[error("{failed} of {total} setups failed, above the 10% failure budget")]
    FailureBudgetExceeded { failed: usize, total: usize },
    #[error("invalid experiment plan: {0}")]
    Plan(String),
}

impl Error {
    pub(crate) fn numerical(what: &'static str) -> impl FnOnce(LinalgError) -> Error {
        move |source| Error::Numerical { what, source }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
