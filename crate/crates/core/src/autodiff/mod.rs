//! Differentiation machinery.
//!
//! Input derivatives (∂/∂x, Δ, third derivatives, ...) are carried forward by
//! [`Jet`]s; parameter gradients are obtained by reverse sweeps over a
//! [`Tape`]. The two compose: a jet whose coefficients are tape variables
//! records every coefficient operation, so one backward pass differentiates a
//! PDE residual with respect to all network parameters.

mod hessian;
mod jet;
mod params;
mod scalar;
mod sum;
mod tape;

pub use hessian::{
    full_spectrum, hvp, jacobi_eigenvalues, power_iteration, symmetric_eigenvalues, PowerIteration,
    FULL_SPECTRUM_LIMIT,
};
pub use jet::{jet_binary, BinaryOp, ComposeTerm, Jet, JetLayout, MAX_SLOTS};
pub use params::{BlockKind, ParamBlock, ParameterVector};
pub use scalar::Scalar;
pub use sum::pairwise_sum;
pub use tape::{NodeId, Tape, Var};
