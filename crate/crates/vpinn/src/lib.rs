//! Time-stepped variational neural solver for 1D parabolic heat conduction.
//!
//! A single feed-forward network maps the spatial coordinate to one solution
//! value per backward-Euler time step. Training minimizes the cumulative
//! truncated dual norm of the per-step weak residual, estimated by projecting
//! onto an orthonormal test basis and integrating with a stochastic midpoint
//! rule. A classical finite-difference solver serves as an independent
//! oracle, and residual-based error bounds tie the loss to the true error.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod problems;
pub mod refsolver;
pub mod testspace;
pub mod train;
pub mod weakform;

pub use error::{Error, Result};
