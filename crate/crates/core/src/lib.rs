//! Cooperative learning for multiview supervised data.
//!
//! Squared-error (or binomial) loss across several data views is coupled with
//! an agreement penalty `(ρ/2) Σ_{m<m'} ‖X_m θ_m − X_{m'} θ_{m'}‖²` that pushes the
//! per-view predictions towards each other. `ρ = 0` is early fusion (a lasso on
//! the concatenated views); `ρ = 1` with uncorrelated views recovers late fusion.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, parallel execution and
//! the command line live in the companion `cooplearn` crate.
//!
//! Module map:
//! - [`data`]: views, standardization, response centering
//! - [`solver`]: cyclic coordinate descent for the elastic net
//! - [`augmented`]: augmented least-squares systems and the cooperative objective
//! - [`coop`]: direct and one-at-a-time cooperative fits, prediction
//! - [`fusion`]: early and late fusion baselines
//! - [`selection`]: folds, cross-validation over `(ρ, λ)`, adaptive cooperative learning
//! - [`glm`]: cooperative logistic regression by IRLS
//! - [`sim`]: latent factor simulators and the sparsity study
//! - [`theory`]: closed-form MSE analysis of the one-feature-per-view estimator
//! - [`compare`]: train/test benchmark of the competing methods
//! - [`exec`]: sequential or caller-supplied parallel execution

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augmented;
pub mod compare;
pub mod coop;
pub mod data;
mod error;
pub mod exec;
pub mod fusion;
pub mod glm;
mod math;
pub mod selection;
pub mod sim;
pub mod solver;
pub mod theory;

pub use error::{CoopError, Result};

/// Dense column-major matrix used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
