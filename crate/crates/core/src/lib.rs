//! Simulation and analysis of Schalkwijk–Kailath style feedback coding over
//! an additive white-noise forward channel whose feedback link is corrupted,
//! either by uniform quantization or by bounded additive noise on an encoded
//! backward channel.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: floor/ceiling maps, reproducible random streams, noise laws.
//! - [`scheme`]: the message maps and the linear encoder/decoder pair.
//! - [`backward`]: the uniform quantizer and the scaled backward-channel link.
//! - [`analysis`]: the achievable-rate function and all closed-form bounds.
//! - [`simulator`]: closed-loop Monte Carlo over the three feedback schemes.
//! - [`verify`]: the invariant suite run by `nfc verify`.

pub mod analysis;
pub mod backward;
pub mod error;
pub mod numerics;
pub mod scheme;
pub mod simulator;
pub mod verify;

pub use error::{Error, Result};
