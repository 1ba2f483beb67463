//! Radar and vision material identification: FMCW simulation, spectral
//! processing, calibrated permittivity estimation, a reference material
//! store, and uncertainty-gated fusion with a visual candidate provider.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod dielectric;
pub mod error;
pub mod fusion;
pub mod knowledge;
pub mod pipeline;
pub mod prca;
pub mod signal_model;
pub mod spectral;
pub mod synthesis;
pub mod vlm_gateway;

pub use error::{Error, Result, Stage};
