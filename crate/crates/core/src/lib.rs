//! Hyperbolic Aware Minimization (HAM).
//!
//! HAM alternates any base optimizer step with a multiplicative, sign
//! preserving hyperbolic step
//!
//! ```text
//! x_{k+1} = x_{k+½} ⊙ exp(−η (α · sign(x_{k+½}) · ∇f(x_k) + β))
//! ```
//!
//! The crate bundles the optimizer with the pieces needed to study it:
//!
//! - [`optim`]: base optimizers, the hyperbolic step, the HAM iteration, the
//!   exponential update and the `m ⊙ w` baseline.
//! - [`flows`]: RK4 integration of the continuous-time Riemannian flows.
//! - [`bregman`]: the HAM potential `R_α`, its conjugate and divergences.
//! - [`regression`]: underdetermined least squares and the exact
//!   constrained-minimizer oracle for the implicit bias.
//! - [`fisher`]: Monte-Carlo Fisher-information checks.
//! - [`sparse_lab`]: masks, pruning and a toy Ac/Dc-style schedule.
//! - [`harness`]: the reproducible experiment runner behind the `ham` binary.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bregman;
pub mod error;
pub mod fisher;
pub mod flows;
pub mod harness;
pub mod numcore;
pub mod objectives;
pub mod optim;
pub mod regression;
pub mod sparse_lab;
pub mod trace;

pub use error::{Error, Result};
pub use numcore::{Matrix, ParamVector, Rng};
pub use objectives::Objective;
pub use optim::{BaseKind, BaseOptimizer, HamConfig, SignSource};
