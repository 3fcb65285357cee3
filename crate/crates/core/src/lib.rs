//! Continual skill-learning runtime.
//!
//! Skills are small imperative programs with parameters and declared
//! pre/postconditions, linked into a directed invocation network. The runtime
//! plans over the network by backward chaining with Boltzmann selection,
//! executes skills against a deterministic crafting simulator while recording
//! nested traces, repairs failures with a two-phase trace-based optimizer
//! (top-down credit assignment, bottom-up gated edits), and compacts the
//! network with canonical structural refactorings validated by rollback.
//!
//! Module map:
//! - [`dsl`] — the skill language: AST, grammar, canonical printing, edits.
//! - [`world`] — the crafting simulator, recipes, tasks, fault injection.
//! - [`network`] — skill nodes, statistics and values, links, snapshots.
//! - [`planner`] — backward chaining, skill selection, forward fallback.
//! - [`executor`] — interpretation, trace construction, composite synthesis,
//!   condition calibration.
//! - [`operator`] — the pluggable reflect/codegen/plan backends (oracle and
//!   HTTP) and their wire types.
//! - [`optimizer`] — gradients, momentum, the maturity gate, two-phase repair.
//! - [`refactorer`] — candidate discovery, the five canonical cases, rollback
//!   validation.
//! - [`harness`] — curriculum runs, ablations, metrics, replay.

pub mod dsl;
pub mod executor;
pub mod harness;
pub mod network;
pub mod operator;
pub mod optimizer;
pub mod planner;
pub mod refactorer;
pub mod rng;
pub mod world;
