//! Note-state matrices and fixed-length bar vectors.

use serde::{Deserialize, Serialize};

use super::smf::{MidiScore, NoteEvent};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollConfig {
    pub steps_per_quarter: u32,
    /// Lowest kept pitch (inclusive).
    pub pitch_lo: u8,
    /// Highest kept pitch (exclusive).
    pub pitch_hi: u8,
}

impl Default for RollConfig {
    fn default() -> Self {
        RollConfig {
            steps_per_quarter: 4,
            pitch_lo: 24,
            pitch_hi: 102,
        }
    }
}

impl RollConfig {
    pub fn n_pitches(&self) -> usize {
        (self.pitch_hi - self.pitch_lo) as usize
    }
}

/// Per-step multi-hot rows. Each row holds `n_pitches` slots of two flags,
/// `[playing, articulated]`, stored interleaved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteStateMatrix {
    pub pitch_lo: u8,
    pub pitch_hi: u8,
    n_steps: usize,
    data: Vec<u8>,
    /// Notes dropped because their pitch fell outside `[pitch_lo, pitch_hi)`.
    pub dropped: usize,
}

impl NoteStateMatrix {
    pub fn zeros(n_steps: usize, pitch_lo: u8, pitch_hi: u8) -> Self {
        let width = 2 * (pitch_hi - pitch_lo) as usize;
        NoteStateMatrix {
            pitch_lo,
            pitch_hi,
            n_steps,
            data: vec![0; n_steps * width],
            dropped: 0,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_pitches(&self) -> usize {
        (self.pitch_hi - self.pitch_lo) as usize
    }

    /// Row width, `2 * n_pitches`.
    pub fn width(&self) -> usize {
        2 * self.n_pitches()
    }

    pub fn row(&self, step: usize) -> &[u8] {
        let w = self.width();
        &self.data[step * w..(step + 1) * w]
    }

    pub fn playing(&self, step: usize, slot: usize) -> bool {
        self.row(step)[2 * slot] == 1
    }

    pub fn articulated(&self, step: usize, slot: usize) -> bool {
        self.row(step)[2 * slot + 1] == 1
    }

    pub fn set(&mut self, step: usize, slot: usize, playing: bool, articulated: bool) {
        let w = self.width();
        let i = step * w + 2 * slot;
        self.data[i] = playing as u8;
        self.data[i + 1] = articulated as u8;
    }

    /// All rows, concatenated.
    pub fn as_flat(&self) -> &[u8] {
        &self.data
    }

    pub fn from_flat(pitch_lo: u8, pitch_hi: u8, data: Vec<u8>) -> Result<Self> {
        if pitch_lo >= pitch_hi {
            return Err(Error::InvalidArgument(format!(
                "pitch range [{pitch_lo}, {pitch_hi}) is empty"
            )));
        }
        let width = 2 * (pitch_hi - pitch_lo) as usize;
        if !data.len().is_multiple_of(width) {
            return Err(Error::DimensionMismatch {
                context: "note-state matrix",
                expected: width * data.len().div_ceil(width),
                actual: data.len(),
            });
        }
        Ok(NoteStateMatrix {
            pitch_lo,
            pitch_hi,
            n_steps: data.len() / width,
            data,
            dropped: 0,
        })
    }
}

/// Step containing `tick`, for a grid of `spq` steps per quarter.
fn step_floor(tick: u64, spq: u64, tpq: u64) -> usize {
    (tick * spq / tpq) as usize
}

/// First step starting at or after `tick`.
fn step_ceil(tick: u64, spq: u64, tpq: u64) -> usize {
    (tick * spq).div_ceil(tpq) as usize
}

/// Quantize notes onto the step grid.
///
/// A step is marked playing when the note overlaps the step's tick window,
/// and articulated at the step containing the onset. Overlapping notes of the
/// same pitch merge into one sustained region articulated once.
pub fn to_state_matrix(score: &MidiScore, cfg: &RollConfig) -> Result<NoteStateMatrix> {
    if cfg.pitch_lo >= cfg.pitch_hi || cfg.pitch_hi > 128 {
        return Err(Error::InvalidArgument(format!(
            "pitch range [{}, {}) must satisfy lo < hi <= 128",
            cfg.pitch_lo, cfg.pitch_hi
        )));
    }
    if cfg.steps_per_quarter == 0 {
        return Err(Error::InvalidArgument(
            "steps_per_quarter must be >= 1".into(),
        ));
    }
    let tpq = score.ticks_per_quarter as u64;
    if tpq == 0 {
        return Err(Error::InvalidArgument(
            "ticks_per_quarter must be >= 1".into(),
        ));
    }
    let spq = cfg.steps_per_quarter as u64;

    let mut by_pitch: Vec<Vec<&NoteEvent>> = vec![Vec::new(); cfg.n_pitches()];
    let mut dropped = 0;
    for e in &score.events {
        if e.pitch < cfg.pitch_lo || e.pitch >= cfg.pitch_hi {
            dropped += 1;
            continue;
        }
        by_pitch[(e.pitch - cfg.pitch_lo) as usize].push(e);
    }
    if dropped > 0 {
        log::warn!(
            "dropped {dropped} notes outside pitch range [{}, {})",
            cfg.pitch_lo,
            cfg.pitch_hi
        );
    }

    let last_tick = score
        .events
        .iter()
        .map(NoteEvent::end_tick)
        .fold(score.end_tick, u64::max);
    let n_steps = step_ceil(last_tick, spq, tpq);
    let mut m = NoteStateMatrix::zeros(n_steps, cfg.pitch_lo, cfg.pitch_hi);
    m.dropped = dropped;

    for (slot, notes) in by_pitch.iter_mut().enumerate() {
        notes.sort_by_key(|e| (e.onset_tick, e.end_tick()));
        let mut regions: Vec<(u64, u64)> = Vec::new();
        for e in notes.iter() {
            match regions.last_mut() {
                Some((_, end)) if e.onset_tick < *end => *end = (*end).max(e.end_tick()),
                _ => regions.push((e.onset_tick, e.end_tick())),
            }
        }
        for (on, off) in regions {
            let first = step_floor(on, spq, tpq);
            let last = step_ceil(off, spq, tpq).max(first + 1);
            for step in first..last {
                let articulated = step == first || m.articulated(step, slot);
                m.set(step, slot, true, articulated);
            }
        }
    }
    Ok(m)
}

/// One bar, flattened row-major: `steps_per_bar` rows of `2 * n_pitches`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarVector {
    pub values: Vec<u8>,
    pub bar_index: usize,
}

impl BarVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Cut a matrix into bars; the trailing partial bar is zero-padded.
pub fn segment_bars(matrix: &NoteStateMatrix, steps_per_bar: usize) -> Result<Vec<BarVector>> {
    if steps_per_bar == 0 {
        return Err(Error::InvalidArgument("steps_per_bar must be >= 1".into()));
    }
    let w = matrix.width();
    let bar_len = steps_per_bar * w;
    Ok(matrix
        .as_flat()
        .chunks(bar_len)
        .enumerate()
        .map(|(bar_index, chunk)| {
            let mut values = chunk.to_vec();
            values.resize(bar_len, 0);
            BarVector { values, bar_index }
        })
        .collect())
}
