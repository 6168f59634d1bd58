//! Core algorithms for gamma-medians, median maximal operators over
//! differentiation bases, and Hajlasz-type smoothness norms and capacities,
//! all on finite weighted point sets.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm` feature
//! instead of `std` to build without the standard library. IO, file formats,
//! and the command line live in the companion `medimax` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("medimax-core needs either the `std` or the `libm` feature");

pub mod basis;
pub mod error;
pub mod experiments;
pub mod hajlasz;
mod math;
pub mod maximal;
pub mod median;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
pub use median::Gamma;
pub use space::{Field, MSet, Space};
