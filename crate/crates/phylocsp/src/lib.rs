//! Workbench for constraint satisfaction over phylogenies.
//!
//! Variables of a phylogenetic CSP are mapped to the leaves of an ordered
//! tree and each constraint is scored by the topology the tree induces on
//! its variables. This crate provides the building blocks for experimenting
//! with such problems at desk scale:
//!
//! * [`tree`] — ordered rooted trees, LCA queries, homeomorphic restriction,
//!   Newick round-tripping;
//! * [`pattern`] — tree patterns, pattern tables (payoff functions), bracket
//!   predicates and the pattern-to-bracket compiler;
//! * [`csp`] — instances, solutions, exact values and brute-force optima;
//! * [`assign`] — biased random assignment and approximation thresholds;
//! * [`gap`] — the level-sampled gap-instance family, coupled random maps,
//!   and the label-divergence check;
//! * [`coarse`] — coarse solutions, `val±` bracketing, and the coarsening
//!   algorithm;
//! * [`problems`] — triplets, quartets, Aho's BUILD, and the
//!   triplets-to-quartets reduction;
//! * [`verify`] — a scriptable battery of the library's invariants.

pub mod assign;
pub mod coarse;
pub mod csp;
pub mod gap;
pub mod pattern;
pub mod problems;
pub mod tree;
pub mod verify;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resource cap exceeded: {what} = {got} exceeds cap {cap}")]
    Resource { what: String, got: u64, cap: u64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
