//! Multi-criteria process parameter optimization.
//!
//! Random-forest surrogates ([`forest`]) predict each quality criterion of a
//! process from its parameters. AHP weights ([`ahp`]) combine the criteria.
//! A deep Q-network agent ([`agents`]) then walks the discretised parameter
//! grid ([`env`]) towards a target, with a tabular Q-learning baseline for
//! comparison. [`pipeline`] wires the pieces into file-based commands.

pub mod agents;
pub mod ahp;
pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod forest;
pub mod pipeline;
pub mod qfunc;
pub mod seed;

pub use error::{Error, Result};
