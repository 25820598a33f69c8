//! Bayesian experience reuse for optimization and control tasks.
//!
//! The crate is organized around a shared-encoder Bayesian neural-linear
//! model: a small feed-forward encoder maps task inputs to features, and one
//! normal-inverse-gamma head per task performs closed-form Bayesian linear
//! regression on those features. Source tasks are weighted for reuse by a
//! simplex-constrained quadratic program over the heads' posteriors, and the
//! reuse loop feeds weighted source experience to a base learner
//! (differential evolution for static optimization, a stochastic exploration
//! policy for the supply-chain environment).

pub mod benchmark_functions;
pub mod bers;
pub mod diffevo;
pub mod error;
pub mod neural_linear;
pub mod numerics;
pub mod rng;
pub mod source_weighting;
pub mod supply_chain;

pub use error::{Error, Result};
