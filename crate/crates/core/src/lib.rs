//! Adaptive variational simulation of open quantum systems.
//!
//! This crate solves the Lindblad master equation for small spin systems with
//! two complementary strategies, both built on an adaptively grown ansatz of
//! Pauli-rotation layers:
//!
//! - **Trajectory method** ([`solvers::run_trajectory`]): stochastic
//!   unravelling into pure-state quantum trajectories with deterministic
//!   non-Hermitian evolution interrupted by random jumps. Averaging the
//!   trajectory projectors reconstructs the density matrix.
//! - **Vectorization method** ([`solvers::run_vectorized`]): column-stacking
//!   the density matrix into a state vector on a doubled register, evolved
//!   under a single non-Hermitian generator.
//!
//! In both cases the normalized state is tracked variationally by minimizing
//! the McLachlan distance, the ansatz is grown greedily from an operator pool
//! ([`adaptive`]), and the state-vector norm is accumulated classically as the
//! log-factor `Γ`.
//!
//! An exact dense Runge-Kutta integrator ([`oracle`]) provides the reference
//! solution everything is validated against, and [`metrics`] supplies
//! infidelity, eigenstate populations, gate-resource counting, and the
//! power-law/exponential scaling fits used for resource analysis.
//!
//! The `parallel` feature (on by default) switches the trajectory batch
//! runner and the pool candidate scan to rayon; without it everything runs
//! sequentially. Results are bitwise identical either way.

pub mod adaptive;
pub mod error;
pub mod metrics;
pub mod models;
pub mod oracle;
mod parallel;
pub mod pauli;
pub mod solvers;
pub mod state;
pub mod variational;

pub use error::SimError;
pub use pauli::{PauliOp, PauliString, PauliSum};
pub use state::{DensityMatrix, StateVector};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SimError>;
