//! Split-sample cross validation for choosing among density estimators.
//!
//! The crate fits competing procedures on an estimation half of the data,
//! scores them by holdout log-likelihood, and picks the argmax. Around that
//! selection rule it provides the Hellinger / KL / V loss functionals, the
//! tail and union bounds that control misselection, and a seeded Monte Carlo
//! harness for measuring selection probabilities.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cv_select;
pub mod density;
pub mod divergences;
mod error;
pub mod estimators;
pub mod harness;
pub mod quadrature;
pub mod rng;
pub mod theory;
pub mod truth;

pub use density::{Density, Gaussian, GaussianMixture, Sample, Uniform};
pub use error::{Error, Result};
pub use estimators::{FittedDensity, Procedure, ProcedureSpec};
pub use truth::{TrueDensity, TruthSpec};
