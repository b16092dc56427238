//! Simulation and lifetime forecasting for last-level caches built from
//! bitcells that wear out with writes.

pub mod cachesim;
pub mod codec;
pub mod config;
pub mod endurance;
pub mod error;
pub mod forecast;
pub mod layout;
pub mod workload;

pub use error::{Error, Result};
