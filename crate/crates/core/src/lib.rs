//! Two-point correlation functions of finite spin chains from exact spectra,
//! with the late-time factorization, fluctuation and equilibration-timescale
//! checks built on top of them.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod config;
pub mod correlators;
pub mod error;
pub mod experiments;
pub mod gapstats;
pub mod linalg;
pub mod spectral;
pub mod spinchain;
pub mod weak_eth;

pub use error::{Error, Result};
