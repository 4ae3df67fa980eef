//! Monte Carlo engine for stochastic reductions driven by probability
//! current.
//!
//! A universe state holds one realized component, evolved by the
//! Schrödinger equation, and any number of ready components created by
//! irreversible captures. Probability current flows from the realized
//! component into each ready component; a stochastic trigger strikes a ready
//! component with hazard `J/s`; the chosen component becomes the sole
//! realized component; ready components are frozen until chosen.
//!
//! Modules:
//! - [`component`]: realized/ready components and the universe state
//! - [`wave`]: grids, Crank–Nicolson propagation, capture channels and the
//!   current ledger
//! - [`reduction`]: trigger, collapse, freeze checks, and the step loop
//! - [`decoherence`]: batch partitions and batch channels
//! - [`scenario`]: builders for the localization scenarios
//! - [`analysis`]: trajectories, ensembles, oracles, and reports
//! - [`io`]: configuration files, manifests, and result files

// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod component;
pub mod decoherence;
pub mod error;
pub mod io;
mod quadrature;
pub mod reduction;
pub mod scenario;
pub mod stats;
pub mod wave;

pub use error::{ConfigIssue, Error, Result};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
