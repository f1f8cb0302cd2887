//! Classical fixed-step ODE/SDE integrators combined with small feedforward
//! neural surrogates trained by an evolution strategy or by per-sample SGD.
//!
//! The modules build on each other bottom-up:
//!
//! - [`linalg`]: dense vectors and matrices, LU solve, matrix exponential
//! - [`problems`]: forced scalar decay, method-of-lines heat equation, references
//! - [`solvers`]: explicit Euler, exponential and Strang splitting, Euler–Maruyama
//! - [`neuralnet`]: sigmoid MLP with exact backpropagation
//! - [`training`]: datasets, evolution strategy, SGD, rollout and validation
//! - [`hybrid`]: exponential splitting with a learned nonlinear slot
//! - [`cli`]: the `hybrid-ode` command-line driver

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod hybrid;
pub mod linalg;
pub mod neuralnet;
pub mod problems;
mod random;
pub mod solvers;
pub mod training;

pub use error::{Error, Result};
pub use random::{derive_seed, stream_rng};
