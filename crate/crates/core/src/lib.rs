//! Decentralized multi-user channel allocation: three per-user learners
//! (Exp3, RLA, RS), exact oracles for the socially optimal allocation and the
//! pure equilibria of the induced congestion game, the replicator limit of
//! Exp3, and the regret analysis tooling used to check them.

// Parameter checks are written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod congestion;
pub mod error;
pub mod game;
pub mod harness;
pub mod learners;
pub mod replicator;

pub use error::{Error, Result};
pub use game::{ActionProfile, Allocation, GameSpec, OptimalSolution, RateKind};
