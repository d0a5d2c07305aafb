//! Learned key-point matching and rigid registration for LiDAR scans.
//!
//! The pipeline selects key-points by a local smoothness measure, encodes a
//! fixed-size neighborhood ("pillar") around each, exchanges context between
//! both scans with alternating self/cross attention, and turns descriptor
//! similarities into a soft assignment with a log-domain Sinkhorn solver.
//! Matches feed a closed-form SVD transform estimate.

pub mod cloud;
pub mod error;
pub mod eval;
pub mod io;
pub mod learn;
pub mod network;
pub mod register;
pub mod transport;

pub use error::{Error, Result};
pub use pillarmatch_autodiff as autodiff;
