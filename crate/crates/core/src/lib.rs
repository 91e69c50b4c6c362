//! Thompson sampling for combinatorial semi-bandits.
//!
//! A decision maker repeatedly selects a feasible subset of options (a
//! matching, a top-m set, a knapsack assignment), observes the outcome of
//! every selected option, and learns the option means through a Bayesian
//! model. This crate provides:
//!
//! - the domain types and exact argmax solvers over structured action sets,
//! - conjugate and MCMC posterior samplers (independent Beta-Bernoulli and
//!   three hierarchical two-way models),
//! - the simulation engine, including a monthly refugee-placement scenario
//!   with capacity carryover,
//! - information-theoretic regret bounds and exact finite-instance checks of
//!   the inequalities behind them,
//! - randomization tests over re-run allocations.
//!
//! All randomness flows through explicitly seeded ChaCha generators, so any
//! artifact this crate produces is byte-reproducible from its seed.

pub mod domain;
pub mod engine;
pub mod error;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod posterior;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
