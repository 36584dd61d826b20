//! Online dynamic pricing of EV charging reservations.
//!
//! The crate models reservation requests as a discretized Poisson process,
//! formulates seller pricing as a finite-horizon MDP and provides four
//! pricers on top of it: Monte-Carlo tree search, exact value iteration, a
//! trained flat rate, and a clairvoyant oracle. The [`harness`] module runs
//! the seller/customer protocol over generated request sequences and
//! aggregates seeded, paired experiments.

pub mod config;
pub mod demand;
pub mod error;
pub mod exec;
pub mod harness;
pub mod market;
pub mod mdp;
pub mod rng;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
