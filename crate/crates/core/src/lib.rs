//! Multi-hop ride-sharing fleet simulator with a double deep Q-network
//! repositioning policy.

pub mod config;
pub mod demand;
pub mod dispatch;
pub mod engine;
pub mod error;
pub mod eventlog;
pub mod experiment;
pub mod fleet;
pub mod grid;
pub mod matching;
pub mod metrics;

pub use config::RunConfig;
pub use engine::{Mode, SimConfig, Simulator};
pub use error::{Error, Result};
pub use grid::{GridMap, Zone};
