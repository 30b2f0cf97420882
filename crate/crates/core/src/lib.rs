//! Context-conditioned multiproduct log-demand surfaces.
//!
//! A shared encoder turns per-product tokens into latents, own and pair heads
//! produce the coefficients of a structured log-demand surface over
//! truncated-power spline bases, and price elasticities are read off as exact
//! derivatives of that surface. The crate also carries the panel pipeline,
//! integrability checks, a pairwise OLS benchmark and stability diagnostics.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod field;
pub mod io;
pub mod model;
pub mod panel;
pub mod rng;
pub mod spline;
pub mod training;

pub use error::{Error, Result};
