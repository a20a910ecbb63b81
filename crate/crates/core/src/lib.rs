//! Simulation and estimation toolkit for a long-lived quantum memory that
//! releases stored polarization qubits into one of several output channels.
//!
//! The crate models retrieval physics ([`memory`]), photon counting
//! ([`detection`]), state and process reconstruction ([`tomography`]) and the
//! decay-model fits ([`fitting`]); [`harness`] ties them into reproducible
//! scenarios with file output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod fitting;
pub mod harness;
pub mod memory;
pub mod polarization;
pub mod rng;
pub mod tomography;

pub use error::{Error, Result};
