//! Link-level simulation of multi-user MIMO visible-light downlinks.
//!
//! The channel model follows the Lambertian line-of-sight formulation; the
//! transmitter applies either channel inversion (CI) or optical adaptive
//! precoding (OAP), and closed-form BER expressions are cross-checked by a
//! seeded Monte Carlo engine.

pub mod analytic;
pub mod channel;
pub mod csi;
mod error;
pub mod montecarlo;
pub mod noise;
pub mod precoding;

pub use error::{Error, Result};
