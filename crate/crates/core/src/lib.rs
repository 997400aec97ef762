//! Physics-informed neural network laboratory.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`]: truncated Taylor jets for input derivatives, a scalar
//!   reverse-mode tape for parameter gradients, and second-order probes
//!   (Hessian-vector products, power iteration, dense spectra).
//! * [`models`]: plain and gated fully-connected networks evaluated over jets,
//!   both per point (generic scalars) and batched (dense layer sweeps).
//! * [`problems`]: benchmark PDEs, samplers and residual assembly.
//! * [`trainer`]: composite losses, Adam, learning-rate schedule and
//!   gradient-statistics loss weighting.
//! * [`diagnostics`]: gradient histograms, Hessian traces and spectra.
//! * [`cavity_ref`]: streamfunction–vorticity finite-difference solver for the
//!   lid-driven cavity reference field.

pub mod autodiff;
pub mod cavity_ref;
pub mod diagnostics;
pub mod error;
pub mod models;
pub mod problems;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
