//! Error type shared by the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected {expected} {what} coordinates, got {got}")]
    DimensionMismatch {
        context: &'static str,
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{context}: continuous coordinate {axis} = {value} outside [{lo}, {hi}]")]
    CoordinateOutOfRange {
        context: &'static str,
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{context}: label coordinate {axis} = {label} outside alphabet of size {alphabet}")]
    LabelOutOfRange {
        context: &'static str,
        axis: usize,
        label: usize,
        alphabet: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameter vector outside the declared theta box: {0}")]
    ThetaOutOfDomain(String),

    #[error("radius must be positive for the dual solver (got {rho}); use the plain expectation for rho = 0")]
    RadiusNotPositive { rho: f64 },

    #[error("radius {rho} must be negative-free (got {rho} < 0)")]
    RadiusNegative { rho: f64 },

    #[error(
        "regularized problem infeasible: rho = {rho} must exceed the kernel moment m_c = {m_c}; \
         raise rho above m_c so that the dual upper bound 2*sup_norm/(rho - m_c) exists"
    )]
    RegInfeasible { rho: f64, m_c: f64 },

    #[error(
        "critical radius is zero: the family contains a (near-)constant function, \
         so no positive dual lower bound exists"
    )]
    DegenerateFamily,

    #[error("objective became non-finite at {what}")]
    NonFinite { what: String },

    #[error("this check requires a pure power-of-distance cost; label-weighted (kappa) costs are rejected")]
    MixedCost,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("tabulated family table does not match the declared grids: {0}")]
    TabulatedMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
