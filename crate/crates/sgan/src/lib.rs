//! Learners for stochastic state-transition models on exactly solvable grid
//! domains, built on a small reverse-mode autodiff engine that supports
//! gradients of gradients (double backprop).
//!
//! The crate is organized around the data flow of an experiment:
//!
//! * [`domains`] — grid environments with exact successor distributions,
//!   state encodings, and dataset generation.
//! * [`autodiff`] — dense `f64` tensors on a define-by-run graph; `backward`
//!   can itself be recorded so losses may contain inner gradients.
//! * [`nn`] — generator / discriminator constructors, Adam, checkpoints.
//! * [`learners`] — tabular, deterministic-net, GP-WGAN and SGAN training.
//! * [`evaluation`] — L1 distance to the true distribution and sample
//!   validity, with snapping of raw outputs to canonical states.
//! * [`theory`] — closed-form 1D quantities (optimal discriminator field,
//!   EMD) and Monte Carlo checks of the interpolation-hit probability.
//! * [`seed`] — named, documented fan-out of a master seed into streams.

pub mod autodiff;
pub mod domains;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod nn;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
