//! Piecewise-stationary combinatorial semi-bandits with causally related rewards.
//!
//! The environment couples base-arm rewards through a linear structural
//! equation model (SEM): playing a super arm produces exogenous inputs
//! `z = diag(b) x`, and the overall rewards solve `y = W y + z` for a
//! sparse causal adjacency matrix `W`. Both the arm distributions and `W`
//! change at unknown breakpoints.
//!
//! Crate layout:
//! - [`sem_core`]: environment model, reward generation, optimal-action
//!   oracle, regret accounting, and synthetic scenario generation
//! - [`changepoint`]: per-arm GLR change-point detector
//! - [`graph_learn`]: online sparse estimation of the adjacency matrix
//! - [`policies`]: the PS-SEM-UCB family and baseline policies
//! - [`bounds`]: numeric evaluation of the regret bounds
//! - [`harness`]: replicated experiment runner, metrics, CSV export
//! - [`cli`]: the `csb` command-line interface

pub mod bounds;
pub mod changepoint;
pub mod cli;
pub mod error;
pub mod graph_learn;
pub mod harness;
pub mod policies;
pub mod sem_core;

pub use error::{CsbError, Result};
