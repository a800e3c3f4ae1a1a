//! Experiment harness: configuration, the sweep runner and its on-disk
//! artifacts, reporting, and plotting.

pub mod config;
pub mod plot;
pub mod report;
pub mod runner;
