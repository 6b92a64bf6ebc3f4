//! Batch front-end: experiment configs, sweeps, convergence fits and the
//! validation suite.

pub mod config;
pub mod output;
pub mod runner;
pub mod validate;
