//! Data-driven fixed-structure controller design by iterative model matching.
//!
//! Given frequency-response samples of an unknown plant and a desired
//! closed-loop reference model, the design loop tunes a fixed-order
//! controller so that the closed loop matches the reference. Each iteration
//! fits a descriptor model of the current loop from data (Loewner
//! interpolation), computes its H-infinity norm, and restricts the next
//! controller update to the small-gain ball that keeps the loop stable.

// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod closed_loop;
pub mod controller;
pub mod error;
pub mod freq_data;
mod la;
pub mod linsys;
pub mod loewner;
mod optim;
pub mod poly;
pub mod solver;

pub use controller::{ControllerStructure, Properness};
pub use error::{Error, Result};
pub use freq_data::{
    logspace_frequencies, sample_rational, FrequencyDataset, FrequencySample, RationalEntry,
    RationalTransferMatrix,
};
pub use linsys::{hinf_norm, is_stable, spectral_abscissa, StateSpace};
pub use loewner::{realize, DescriptorRealization, LoewnerModel};
pub use poly::Poly;
pub use solver::{initialize_controller, run_ldisc, DesignConfig, DesignReport, StopReason};
