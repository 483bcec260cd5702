//! Joint chromatic-polarimetric demosaicing for single-chip RGB-polarization
//! sensors.
//!
//! The sensor observes one (color, polarizer-angle) channel per pixel through
//! a 4x4 repeating filter array; this crate reconstructs all twelve
//! full-resolution channels from that single mosaic plane. The joint method
//! couples a data-fidelity term with two learned sparse-coding priors (one
//! chromatic, one polarimetric) inside an ADMM loop. Dictionary learning
//! (K-SVD), sparse coding (OMP and a low-rank + sparse-noise ALM solver),
//! interpolation baselines, a synthetic scene generator, and a
//! polarization-aware metrics suite round out the pipeline.

pub mod admm;
pub mod alm;
pub mod baselines;
pub mod dictionary;
pub mod error;
pub mod image;
pub mod interp;
pub mod ksvd;
pub mod metrics;
pub mod mosaic;
pub mod omp;
pub mod pattern;
pub mod reproduce;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
