//! Bayesian eigenmodel for dynamic multilayer networks.
//!
//! A dynamic multilayer network records `K` relations among the same `n`
//! nodes at `T` time points. This crate implements a bilinear latent space
//! model for such data: every dyad's connection log-odds decompose into
//! layer-specific sociality effects, a latent trajectory shared by all
//! layers, and per-layer diagonal homophily coefficients. Estimation runs
//! structured mean-field coordinate ascent with Polya-gamma augmentation and
//! a variational Kalman smoother, so the posterior keeps its temporal
//! dependencies while every update stays in closed form.
//!
//! The pieces:
//!
//! - [`net`]: network data, edge-list ingestion, hold-out masking.
//! - [`model`]: the generative model and the synthetic-data protocol.
//! - [`gssm`]: variational Kalman filter/smoother on natural parameters.
//! - [`pg`]: Polya-gamma moments.
//! - [`cavi`]: the coordinate ascent engine, initialization, restarts.
//! - [`postprocess`]: identifiable transforms and posterior sampling.
//! - [`eval`]: relative errors, AUC, and epidemic branching factors.
//! - [`cli`]: the command-line pipeline built from the above.
//!
//! The `examples/` directory walks through each capability end to end; the
//! `eigenmodel` binary exposes the same pipeline as subcommands.

pub mod cavi;
pub mod cli;
pub mod error;
pub mod eval;
pub mod gssm;
pub mod linalg;
pub mod model;
pub mod net;
pub mod pg;
pub mod postprocess;
pub mod rng;

pub use error::{Error, Result};
