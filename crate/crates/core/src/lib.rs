//! Bayesian hierarchical probit models of early-life mortality and an
//! uncertainty-propagating Oaxaca decomposition of the change between two
//! surveys.
//!
//! The pipeline is:
//!
//! 1. [`dataset`]: ingest (or simulate) two surveys of birth records, center
//!    continuous covariates on the poorest households of the first survey and
//!    expand them in a shared B-spline basis.
//! 2. [`sampler`]: fit a probit model with a normal cluster random intercept
//!    to each survey by Gibbs sampling with latent-variable augmentation.
//! 3. [`marginal`]: integrate the cluster effect out of every draw, which
//!    rescales the coefficients to `beta / sqrt(1 + sigma2)`.
//! 4. [`decompose`]: split the fitted decline into a covariate (X) effect and a
//!    coefficient (beta) effect, and the beta effect further into sequential
//!    per-group swaps, once per posterior draw.
//! 5. [`diagnostics`]: independent oracles used to check the above.
//!
//! The [`cli`] module wires everything together behind the `probit-oaxaca`
//! binary.

pub mod cli;
pub mod dataset;
pub mod decompose;
pub mod diagnostics;
mod error;
pub mod marginal;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
