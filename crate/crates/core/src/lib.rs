//! Downlink simulation of cell-free massive MIMO with multi-antenna users.
//!
//! The pipeline per channel realization is: uplink pilots and per-AP MMSE
//! channel estimation ([`channel`]), centralized MMSE precoding under per-AP
//! power budgets ([`precoding`]), downlink pilots with LMMSE estimation of the
//! effective channel and ZF combining ([`dl_estimation`]), and three
//! spectral-efficiency bounds evaluated on common channel draws ([`bounds`]).
//! [`harness`] drives whole experiments.
//!
//! The crate is `no_std` with `alloc`; file formats and the CLI live in the
//! companion `cellfree-sim` crate.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bounds;
pub mod channel;
pub mod dl_estimation;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod moments;
pub mod pipeline;
pub mod precoding;
pub mod rng;
pub mod system;

#[cfg(test)]
mod testutil;

pub use error::{Error, LinalgError, Result};
pub use linalg::{CMatrix, C64};
pub use rng::Seed;
pub use system::{build_pilot_book, generate_geometry, Geometry, PathLossModel, PilotBook, Point, SystemConfig};
