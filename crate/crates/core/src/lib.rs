//! Simulation and state estimation for flying-capacitor multicell converters.
//!
//! The crate provides the switched-affine plant model, phase-shifted PWM
//! switching, observability analysis along hybrid time trajectories, an
//! adaptive-gain sliding-mode observer, a switched Luenberger baseline, the
//! Lyapunov and excitation diagnostics, and a fixed-step scenario engine.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod converter;
pub mod error;
pub mod format;
pub mod luenberger;
pub mod modelist;
pub mod observability;
pub mod sim;
pub mod sosml;
pub mod switching;

pub use error::{FlycapError, Result};
