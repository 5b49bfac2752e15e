//! Configuration, orchestration and file formats for the transit-noise
//! simulator in `transit-core`.

pub mod calibrate;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod runner;
pub mod spectrum;
pub mod squeeze;
pub mod sweep;

pub use config::RunConfig;
pub use error::{ConfigError, Result, SimError};
