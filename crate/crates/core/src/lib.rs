//! Cell-free Massive MIMO downlink simulator.
//!
//! Distributed access points build local precoders (MRT, full-pilot ZF,
//! partial ZF, protective partial ZF, regularized ZF) from their own MMSE
//! channel estimates. Per-user spectral efficiency is evaluated in closed
//! form and, independently, by Monte-Carlo estimation of the hardening
//! bound. Power is allocated either by a distributed heuristic or by
//! max-min fairness, solved by bisection over second-order cone
//! feasibility problems with a built-in interior-point solver.

pub mod channel;
pub mod complexity;
pub mod cone;
pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod power;
pub mod precoding;
pub mod rng;
pub mod se;
pub mod stats;
pub mod validate;

pub use channel::{realize_channels, ChannelState, EstimationStats};
pub use config::NetworkConfig;
pub use error::{Error, Result};
pub use geometry::{generate_snapshot, Snapshot};
