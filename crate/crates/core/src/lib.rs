//! Simulation and analysis of spatially shaped photon-pair correlations
//! recorded on an EMCCD.
//!
//! The crate goes from a pair source through a medium and detector model to
//! frame stacks, then from frames to correlation images, peak-height ratios
//! and calibrations.

pub mod constants;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod fft2;
pub mod g2;
pub mod measure;
pub mod medium;
pub mod metrics;
pub mod optics;
pub mod rng;
pub mod sampler;

pub use error::{Error, ErrorKind, Result};
pub use optics::{OpticsConfig, SlmMask};
