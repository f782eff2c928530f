//! Data-dependent weighted LASSO for sparse Poisson inverse problems.
//!
//! The crate covers the whole pipeline: simulate a sparse non-negative
//! signal and a sensing model (Bernoulli compressive imaging or random
//! convolution on a circle), draw Poisson counts, build the recentred
//! surrogate `(Ã, Ỹ)`, compute observable weights from Poisson concentration
//! bounds, and solve the weighted LASSO. [`diagnostics`] checks the modelling
//! assumptions on concrete instances and [`experiments`] runs seeded Monte
//! Carlo sweeps that write CSV tables.

pub mod bernoulli;
pub mod cli;
pub mod concentration;
pub mod config;
pub mod convolution;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use model::{LinearOperator, PoissonObservations, SparseSignal, SurrogatePair};
pub use solver::{SolveResult, SolverConfig, WeightKind, WeightVector};
