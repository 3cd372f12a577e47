//! Multipath time delay estimation for broadband sources recorded on a single
//! hydrophone.
//!
//! The crate covers four layers:
//!
//! - [`signal`]: framing, windowed power spectra, log spectra, autocorrelation.
//! - [`cepstrum`]: power cepstrum, mean-cepstrum subtraction and peak picking.
//! - [`sim`]: synthetic shallow-water transits with one seafloor echo and
//!   coloured ambient noise.
//! - [`eval`]: per-frame estimation, mean absolute error and parameter sweeps.
//!
//! [`io`] reads and writes the WAV, CSV, scenario and manifest files used by
//! the command-line tool.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cepstrum;
pub mod error;
pub mod eval;
mod fft;
pub mod io;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
