//! Monte Carlo model of atomic transit noise in quantum-nondemolition spin
//! squeezing with a hot, wall-coated vapor cell.
//!
//! The crate is `no_std` (with `alloc`) and contains only the numerical
//! pieces: atomic kinematics in a circular cell, probe-beam coupling, the
//! semiclassical spin/light dynamics, lock-in demodulation and PSD estimation,
//! and the covariance/conditional-variance squeezing analysis. File formats,
//! configuration and the CLI live in the `transit-sim` crate.
//!
//! Units used throughout: lengths in mm, times in ms, velocities in mm/ms
//! (= m/s), frequencies in kHz, angular frequencies in rad/ms and couplings
//! in ms^-1/2.

#![no_std]

extern crate alloc;

pub mod coherence;
pub mod consts;
pub mod dynamics;
mod error;
pub mod fft;
pub mod kinematics;
pub mod optics;
pub mod rng;
pub mod spectra;
pub mod squeezing;
pub mod stats;

pub use error::{Error, Result};
