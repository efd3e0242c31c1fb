//! Poisson-Charlier spectral moment closure for birth-death processes.
//!
//! [`special`] holds the Poisson tail and moment machinery, [`charlier`] the
//! orthonormal polynomials and density projections, [`sobolev`] the weighted
//! norms used to measure projection errors, [`models`] the rate pairs,
//! [`closure`] the closed-form surrogate expectations and moment equations,
//! [`solve`] the integrators, and [`harness`] the experiments and CLI.

pub mod charlier;
pub mod closure;
pub mod error;
pub mod harness;
pub mod models;
pub mod pmf;
pub mod sobolev;
pub mod solve;
pub mod special;

pub use error::{Error, Result};
pub use pmf::PmfVector;
