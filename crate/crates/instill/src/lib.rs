//! Desk-scale laboratory for distilling diffusion score models into
//! one-step generators.
//!
//! The crate trains small score networks by denoising score matching, then
//! transfers them into single-forward-pass generators by descending an
//! integral KL divergence between the diffused generator and teacher
//! marginals. Analytic Gaussian ground truth backs every formula: closed-form
//! scores, KL paths, and quadrature oracles live in [`analytic`] and the
//! training estimators are tested against them.

pub mod analytic;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod nets;
pub mod rng;
pub mod tensorgrad;
pub mod training;

pub use error::{Error, Result};
