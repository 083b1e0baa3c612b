//! Worst-case backlog and delay bounds for tree networks of rate-latency
//! servers crossed by token-bucket flows, and stability analysis of
//! networks with cyclic dependencies.
//!
//! Servers and flows are indexed from 0 throughout the library.

pub mod curves;
pub mod decomposition;
pub mod error;
pub mod generators;
pub mod io;
pub mod network;
pub mod oracle;
pub mod stability;
pub mod tree_analysis;

pub use curves::{Bound, RateLatency, ServerClass, TokenBucket};
pub use error::{Error, Result};
pub use network::{Arc, Flow, Network, Topology};
