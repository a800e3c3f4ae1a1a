//! Federated PPO with personalized observation normalization (PON).
//!
//! The crate simulates a bulk-synchronous federation of PPO agents, each
//! interacting with its own heterogeneous continuous-control environment.
//! Agents keep private per-dimension running statistics for observation
//! normalization; model parameters are periodically averaged on a central
//! reducer and broadcast back.
//!
//! Module map:
//! - [`runstats`]: streaming per-dimension mean/variance with batch merge.
//! - [`nn`]: actor-critic MLPs, reverse-mode gradients, Adam.
//! - [`envs`]: morphology-randomized toy environments.
//! - [`ppo`]: rollout collection, GAE, the clipped-surrogate update.
//! - [`fed`]: FedAvg aggregation, broadcast, and the round loop.
//! - [`analysis`]: weight-norm and observation-distribution diagnostics.

pub mod analysis;
pub mod envs;
pub mod error;
pub mod fed;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod runstats;

pub use error::{Error, Result};
