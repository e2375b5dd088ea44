//! A distributed software-voting library: N-module-redundant farms of voter
//! threads arranged in a cliqué, seven metric-space voting algorithms, and a
//! harness for desk-scale fault-masking experiments.
//!
//! # Architecture
//!
//! Each user module talks only to its *local voter*, a thread spawned on its
//! behalf. The voter connects to its N−1 fellows over an in-process
//! message-passing transport, broadcasts its user's input in a deadlock-free
//! order, collects the other inputs, votes, and reports the outcome back (and
//! optionally to a downstream output module).
//!
//! The lifecycle of a farm, driven through [`farm::VotingFarm`]:
//!
//! 1. **define** — [`farm::NodeHandle::open_farm`] with a farm id and metric;
//! 2. **describe** — [`farm::VotingFarm::add_voter`] once per voter, the same
//!    way on every node;
//! 3. **activate** — [`farm::VotingFarm::run`] spawns the local voter;
//! 4. **control** — [`farm::VotingFarm::control`] sends input and control
//!    messages; [`farm::VotingFarm::get`] reads the voter's replies;
//! 5. **destroy** — [`farm::VotingFarm::close`] asks the voter to quit.
//!
//! The [`algorithms`] module is usable on its own for one-shot voting without
//! a farm. See the crate examples for runnable walkthroughs of each
//! capability, and the `voting-farm` binary for the `vote` and `simulate`
//! commands.

pub mod algorithms;
pub mod farm;
pub mod metric;
pub mod protocol;
pub mod sim;
pub mod transport;
mod voter;

pub use farm::{FarmEvent, FarmOptions, Machine, NodeHandle, VotingFarm};
pub use metric::Metric;
pub use protocol::{AlgorithmId, ControlMessage, MessageCode, Outcome, VfError, VoteResult};
