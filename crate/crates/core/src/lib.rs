//! Channel allocation for dense WLANs with a graph-convolutional dueling
//! double DQN.

pub mod canon;
pub mod eigen;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rl;
pub mod seeds;
pub mod throughput;
pub mod topology;

pub use error::{Error, Result};
