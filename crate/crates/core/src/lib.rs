//! Solvers and certificates for Wasserstein distributionally robust
//! optimization (WDRO) on compact mixed sample spaces.
//!
//! The crate is organised around the dual view of the robust risk
//! `R_ρ(f) = inf_{λ≥0} { λρ + E_Q[φ(λ,f,ξ)] }` with the per-sample generator
//! `φ(λ,f,ξ) = sup_ζ { f(ζ) − λ c(ξ,ζ) }`, plus its entropically
//! regularized counterpart `φ^{τ,ε}`. On top of the solvers sit the
//! certificate quantities (critical radius, maximal-radius curve, dual
//! bounds, concentration constants) and a seeded Monte Carlo harness that
//! checks the exact generalization bound `R̂_ρ(f) ≥ E_P[f]` empirically.
//!
//! All numeric code is generic over the scalar type through [`Real`];
//! concrete `f64` aliases live at the crate root.

// validation guards are written as negated comparisons so NaN inputs fall
// through to the error path; the numeric kernels index several arrays per
// iteration, where range loops read better than zipped iterators
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod certificates;
pub mod dual;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod opt;
pub mod reg;
pub mod risk;
pub mod scalar;
mod simplex;
pub mod space;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` lane aliases for the main domain types.
pub type SamplePoint64 = space::SamplePoint<f64>;
pub type SampleSpace64 = space::SampleSpace<f64>;
pub type TransportCost64 = space::TransportCost<f64>;
pub type LossFamily64 = losses::LossFamily<f64>;
pub type FamilyConstants64 = losses::FamilyConstants<f64>;
pub type EmpiricalDistribution64 = risk::EmpiricalDistribution<f64>;
pub type DualSolveResult64 = risk::DualSolveResult<f64>;
pub type ReferenceKernel64 = reg::ReferenceKernel<f64>;
pub type RegParams64 = reg::RegParams<f64>;
pub type CertificateBundle64 = certificates::CertificateBundle<f64>;
pub type RegCertificateBundle64 = certificates::RegCertificateBundle<f64>;
pub type GroundTruth64 = experiments::GroundTruth<f64>;
pub type CoverageReport64 = experiments::CoverageReport<f64>;
