//! Deterministic, trace-driven simulation of cross-device federated learning.
//!
//! Three server protocols run over the same simulated devices and data:
//! synchronous rounds, FedBuff-style buffered asynchronous aggregation, and
//! TimelyFL, which fixes a per-round deadline from the clients' probed speeds
//! and fits every client into it by adjusting local epochs and the number of
//! output-side layers it trains.

pub mod baseline;
pub mod config;
pub mod data;
pub mod device;
pub mod error;
pub mod metrics;
pub mod model;
pub mod protocol;
pub mod rng;
pub mod sim;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use protocol::Protocol;
pub use sim::{run, Environment, RunLog};
