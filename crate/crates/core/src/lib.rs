//! Context-dependent attention for MDP-driven robots.
//!
//! A catalog of contexts (finite MDPs sharing state and action spaces) is
//! compressed into bisimulation quotients, one "attention" abstraction per
//! context. An online Bayesian filter over the catalog reads rewards and
//! observed states, detects context switches and selects the abstraction
//! whose policy the robot should run.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: finite MDPs, context catalogs, seeded sampling.
//! - [`schedule`]: ground-truth switch schedules (step, periodic, random, scripted).
//! - [`bisim`]: coarsest bisimulation partitions and quotient abstractions.
//! - [`policy`]: value iteration over quotients and the uniform random policy.
//! - [`filter`]: the online attention switching filter.
//! - [`scenarios`]: the three-state tracking world and a two-human pursuit simulation.
//! - [`harness`]: seeded trials, traces and metrics.
//! - [`config`], [`suite`]: experiment files, suite execution and CSV/JSON output.

pub mod bisim;
pub mod config;
pub mod error;
pub mod filter;
pub mod harness;
pub mod mdp;
pub mod policy;
pub mod rng;
pub mod scenarios;
pub mod schedule;
pub mod suite;

pub use error::{Error, Result};
