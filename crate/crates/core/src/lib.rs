//! Dynamic-preference multi-objective Q-learning for packet routing in lossy
//! multi-hop networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`]: the routing graph (loss probabilities, hop energies, sink,
//!   unreliable nodes) and its text format.
//! - [`mdp`]: the stochastic-shortest-path routing MDP with its two reward
//!   signals and the preference scalarization.
//! - [`preference`]: preference grids, bracketing and per-episode schedules.
//! - [`learner`]: parallel per-preference Q-tables, the greedy interpolation
//!   policy and exploration schedules.
//! - [`distributed`]: the same learner executed as per-node agents exchanging
//!   data and acknowledgement messages.
//! - [`oracle`]: exact value iteration and the interpolation error bound.
//! - [`baselines`]: restart-on-change, static single-preference and
//!   shortest-path comparison routers.
//! - [`harness`]: experiment orchestration, energy accounting and CSV output.
//! - [`cli`]: the `dpq` command-line front end.

pub mod baselines;
pub mod cli;
pub mod distributed;
pub mod error;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod oracle;
pub mod preference;
pub mod topology;

pub use error::{Error, Result};
pub use topology::{NodeId, Topology};
