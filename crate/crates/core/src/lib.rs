//! Deep music information dynamics.
//!
//! The pipeline turns MIDI bars into latent frames with a variational
//! auto-encoder, degrades those frames through a rate-limited Gaussian channel
//! and measures two quantities per bit budget:
//!
//! * the temporal information rate of the degraded sequence, estimated with a
//!   Variable Markov Oracle and a block-repeat compressor ([`vmo`]);
//! * the predictive quality of the degraded past against the full-rate
//!   present, estimated with a Donsker-Varadhan neural critic ([`mine`]).
//!
//! [`dynamics`] combines both into per-bar surprisal profiles.
//!
//! ```no_run
//! use infodyn::{dynamics, midi, vae};
//!
//! let bytes = std::fs::read("piece.mid")?;
//! let score = midi::parse_midi(&bytes)?;
//! let roll = midi::to_state_matrix(&score, &midi::RollConfig::default())?;
//! let bars = midi::segment_bars(&roll, 16)?;
//! let params = vae::VaeParams::load("vae.params")?;
//! let report = dynamics::analyze(&bars, &params, "piece", &dynamics::AnalysisConfig::default())?;
//! println!("{}", serde_json::to_string_pretty(&report).unwrap());
//! # Ok::<(), infodyn::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
mod error;
pub mod midi;
pub mod mine;
pub mod nn;
pub mod rate;
pub mod seed;
pub mod vae;
pub mod vmo;

pub use error::{Error, Result};
