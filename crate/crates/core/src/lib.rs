//! Latency minimization for IRS-aided multi-device mobile edge computing.

pub mod error;
pub mod numerics;
pub mod rng;
pub mod comms_opt;
pub mod compute_alloc;
pub mod scenario;
pub mod solver;
pub mod harness;

pub use error::{Error, Result};
