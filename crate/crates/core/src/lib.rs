//! Extreme-event detection in gridded monthly gross primary productivity.
//!
//! Two anomaly engines share one downstream protocol:
//!
//! * [`vae`]: a variational autoencoder reconstructs 12-month windows; the
//!   anomaly is original minus reconstruction.
//! * [`ssa`]: singular spectrum analysis removes trend and annual-cycle
//!   components; the anomaly is the residual.
//!
//! [`extremes`] turns either anomaly field into percentile thresholds,
//! flags, frequency maps and regional series, and [`compare`] scores the
//! agreement between the two engines.

pub mod anomaly;
pub mod compare;
pub mod error;
pub mod extremes;
pub mod grid;
pub mod nn;
pub mod ssa;
pub mod vae;

pub use error::{Error, ErrorClass, Result};
