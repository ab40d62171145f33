//! MIDI ingest: Standard MIDI Files to multi-hot bar vectors.
//!
//! A bar is a fixed run of sixteenth-note steps (16 by default) regardless of
//! the file's time signature. Each step row carries `[playing, articulated]`
//! flags for every pitch in `[pitch_lo, pitch_hi)`, so the default bar vector
//! has `16 * 2 * 78 = 2496` entries.

mod roll;
mod smf;

pub use roll::{segment_bars, to_state_matrix, BarVector, NoteStateMatrix, RollConfig};
pub use smf::{parse_midi, MidiScore, NoteEvent};

#[doc(hidden)]
pub use smf::testing;

use crate::Result;

pub const DEFAULT_STEPS_PER_BAR: usize = 16;

/// Parse, quantize and segment in one call.
pub fn bars_from_bytes(
    bytes: &[u8],
    cfg: &RollConfig,
    steps_per_bar: usize,
) -> Result<Vec<BarVector>> {
    let score = parse_midi(bytes)?;
    let roll = to_state_matrix(&score, cfg)?;
    segment_bars(&roll, steps_per_bar)
}

/// Bar-vector length for a roll configuration.
pub fn bar_len(cfg: &RollConfig, steps_per_bar: usize) -> usize {
    steps_per_bar * 2 * cfg.n_pitches()
}
