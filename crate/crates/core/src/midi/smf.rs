//! Standard MIDI File reader (formats 0 and 1).
//!
//! Tracks are flattened into a single absolute-tick stream of sounding notes.
//! Tempo and time-signature meta events are skipped: quantization downstream
//! is in ticks, so they have no effect on the result.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One sounding note, resolved from a note-on/note-off pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_tick: u64,
    /// Always > 0.
    pub duration_ticks: u64,
    /// MIDI note number, 0..128.
    pub pitch: u8,
    pub velocity: u8,
    pub channel: u8,
}

impl NoteEvent {
    pub fn end_tick(&self) -> u64 {
        self.onset_tick + self.duration_ticks
    }
}

/// A parsed file: notes from all tracks merged and sorted by onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidiScore {
    pub ticks_per_quarter: u16,
    pub events: Vec<NoteEvent>,
    /// Latest end-of-track tick over all tracks.
    pub end_tick: u64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::MidiParse {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.err(format!(
                "unexpected end of data: need {} bytes, {} left",
                n,
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn peek(&self) -> Result<u8> {
        self.bytes
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err("unexpected end of data"))
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7F) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::MidiParse {
            offset: start,
            reason: "variable-length quantity longer than 4 bytes".into(),
        })
    }
}

/// Parse a Standard MIDI File.
///
/// Note-on with velocity 0 is a note-off. Each note-off closes the earliest
/// open note of the same channel and pitch; notes still open at end of track
/// are closed there. Zero-length notes are discarded.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiScore> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4)?;
    if magic != b"MThd" {
        return Err(Error::MidiParse {
            offset: 0,
            reason: "missing MThd header".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err(format!("header chunk length {header_len} < 6")));
    }
    let header_start = r.pos;
    let format = r.u16()?;
    let n_tracks = r.u16()?;
    let division = r.u16()?;
    match format {
        0 | 1 => {}
        2 => {
            return Err(Error::MidiUnsupported(
                "SMF format 2 (independent sequences) is not supported".into(),
            ))
        }
        f => {
            return Err(Error::MidiParse {
                offset: header_start,
                reason: format!("unknown SMF format {f}"),
            })
        }
    }
    if division & 0x8000 != 0 {
        return Err(Error::MidiUnsupported(
            "SMPTE time division is not supported; need ticks per quarter".into(),
        ));
    }
    if division == 0 {
        return Err(Error::MidiParse {
            offset: header_start + 4,
            reason: "ticks per quarter is zero".into(),
        });
    }
    r.pos = header_start + header_len;
    if r.pos > bytes.len() {
        return Err(Error::MidiParse {
            offset: bytes.len(),
            reason: "header chunk extends past end of file".into(),
        });
    }

    let mut events = Vec::new();
    let mut end_tick = 0u64;
    let mut tracks_seen = 0u16;
    while r.remaining() > 0 && tracks_seen < n_tracks {
        let chunk_at = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if r.remaining() < len {
            return Err(Error::MidiParse {
                offset: chunk_at,
                reason: format!(
                    "chunk declares {} bytes but only {} remain",
                    len,
                    r.remaining()
                ),
            });
        }
        let body_start = r.pos;
        if id == b"MTrk" {
            let track_end = parse_track(&bytes[..body_start + len], body_start, &mut events)?;
            end_tick = end_tick.max(track_end);
            tracks_seen += 1;
        }
        // Alien chunks are skipped.
        r.pos = body_start + len;
    }
    if tracks_seen < n_tracks {
        log::warn!("header declares {n_tracks} tracks, found {tracks_seen}");
    }

    events.sort_by_key(|e: &NoteEvent| (e.onset_tick, e.pitch, e.channel, e.duration_ticks));
    if let Some(last) = events.iter().map(NoteEvent::end_tick).max() {
        end_tick = end_tick.max(last);
    }
    Ok(MidiScore {
        ticks_per_quarter: division,
        events,
        end_tick,
    })
}

/// Parse one MTrk body. `bytes` ends at the end of the chunk. Returns the
/// absolute tick of the end of the track.
fn parse_track(bytes: &[u8], start: usize, out: &mut Vec<NoteEvent>) -> Result<u64> {
    let mut r = Reader { bytes, pos: start };
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();

    let close = |open: &mut HashMap<(u8, u8), VecDeque<(u64, u8)>>,
                 out: &mut Vec<NoteEvent>,
                 channel: u8,
                 pitch: u8,
                 tick: u64| {
        if let Some((onset, velocity)) = open
            .get_mut(&(channel, pitch))
            .and_then(VecDeque::pop_front)
        {
            if tick > onset {
                out.push(NoteEvent {
                    onset_tick: onset,
                    duration_ticks: tick - onset,
                    pitch,
                    velocity,
                    channel,
                });
            }
        }
    };

    while r.remaining() > 0 {
        tick += r.vlq()? as u64;
        let at = r.pos;
        let first = r.peek()?;
        let status = if first & 0x80 != 0 {
            r.pos += 1;
            first
        } else {
            running.ok_or_else(|| Error::MidiParse {
                offset: at,
                reason: format!("data byte 0x{first:02X} without running status"),
            })?
        };

        match status {
            0xFF => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                r.take(len)?;
                if kind == 0x2F {
                    break;
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0x80..=0xEF => {
                running = Some(status);
                let channel = status & 0x0F;
                let kind = status & 0xF0;
                let a = r.u8()?;
                if a & 0x80 != 0 {
                    return Err(Error::MidiParse {
                        offset: r.pos - 1,
                        reason: format!("expected data byte, found status 0x{a:02X}"),
                    });
                }
                let b = if matches!(kind, 0xC0 | 0xD0) {
                    0
                } else {
                    r.u8()?
                };
                match kind {
                    0x90 if b > 0 => open.entry((channel, a)).or_default().push_back((tick, b)),
                    0x80 | 0x90 => close(&mut open, out, channel, a, tick),
                    _ => {}
                }
            }
            other => {
                return Err(Error::MidiParse {
                    offset: at,
                    reason: format!("unexpected status byte 0x{other:02X} in track"),
                })
            }
        }
    }

    let mut keys: Vec<_> = open.keys().copied().collect();
    keys.sort_unstable();
    for (channel, pitch) in keys {
        while open.get(&(channel, pitch)).is_some_and(|q| !q.is_empty()) {
            close(&mut open, out, channel, pitch, tick);
        }
    }
    Ok(tick)
}

/// Minimal SMF writer used to build test fixtures.
#[doc(hidden)]
pub mod testing {
    use super::NoteEvent;

    fn vlq(mut v: u32, out: &mut Vec<u8>) {
        let mut buf = [0u8; 4];
        let mut n = 0;
        loop {
            buf[n] = (v & 0x7F) as u8;
            n += 1;
            v >>= 7;
            if v == 0 {
                break;
            }
        }
        for i in (0..n).rev() {
            out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
        }
    }

    /// Encode notes as a format-0 file. Note-offs are written as note-on
    /// with velocity 0 when `zero_velocity_off` is set.
    pub fn write_format0(tpq: u16, notes: &[NoteEvent], zero_velocity_off: bool) -> Vec<u8> {
        let mut msgs: Vec<(u64, u8, [u8; 3])> = Vec::new();
        for n in notes {
            msgs.push((
                n.onset_tick,
                1,
                [0x90 | n.channel, n.pitch, n.velocity.max(1)],
            ));
            let off = if zero_velocity_off {
                [0x90 | n.channel, n.pitch, 0]
            } else {
                [0x80 | n.channel, n.pitch, 64]
            };
            msgs.push((n.end_tick(), 0, off));
        }
        msgs.sort_by_key(|m| (m.0, m.1));
        let mut track = Vec::new();
        let mut now = 0u64;
        for (t, _, m) in msgs {
            vlq((t - now) as u32, &mut track);
            track.extend_from_slice(&m);
            now = t;
        }
        track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

        let mut out = Vec::new();
        out.extend_from_slice(b"MThd");
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&0u16.to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes());
        out.extend_from_slice(&tpq.to_be_bytes());
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(track.len() as u32).to_be_bytes());
        out.extend_from_slice(&track);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(format: u16, tracks: u16, division: u16) -> Vec<u8> {
        let mut v = b"MThd".to_vec();
        v.extend_from_slice(&6u32.to_be_bytes());
        v.extend_from_slice(&format.to_be_bytes());
        v.extend_from_slice(&tracks.to_be_bytes());
        v.extend_from_slice(&division.to_be_bytes());
        v
    }

    fn track(body: &[u8]) -> Vec<u8> {
        let mut v = b"MTrk".to_vec();
        v.extend_from_slice(&(body.len() as u32).to_be_bytes());
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn empty_track_gives_no_events() {
        let mut f = header(0, 1, 480);
        f.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        let s = parse_midi(&f).unwrap();
        assert!(s.events.is_empty());
        assert_eq!(s.ticks_per_quarter, 480);
        assert_eq!(s.end_tick, 0);
    }

    #[test]
    fn single_note_hand_decoded() {
        // delta 0 note-on C4 vel 100; delta 480 (0x83 0x60) note-off.
        let mut f = header(0, 1, 480);
        f.extend(track(&[
            0x00, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0x40, 0x00, 0xFF, 0x2F, 0x00,
        ]));
        let s = parse_midi(&f).unwrap();
        assert_eq!(
            s.events,
            vec![NoteEvent {
                onset_tick: 0,
                duration_ticks: 480,
                pitch: 60,
                velocity: 100,
                channel: 0
            }]
        );
        assert_eq!(s.end_tick, 480);
    }

    #[test]
    fn zero_velocity_note_on_is_note_off_with_running_status() {
        // note-on 60, then running-status "60 0" after 240 ticks.
        let mut f = header(0, 1, 480);
        f.extend(track(&[
            0x00, 0x90, 60, 90, 0x81, 0x70, 60, 0, 0x00, 0xFF, 0x2F, 0x00,
        ]));
        let s = parse_midi(&f).unwrap();
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.events[0].duration_ticks, 240);
        assert_eq!(s.events[0].velocity, 90);
    }

    #[test]
    fn format1_tracks_merge_sorted() {
        let mut f = header(1, 2, 96);
        f.extend(track(&[
            0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x00, 0xFF, 0x2F, 0x00,
        ]));
        f.extend(track(&[
            0x30, 0x91, 64, 80, 0x30, 0x81, 64, 0, 0x00, 0x90, 48, 70, 0x60, 0x80, 48, 0, 0x00,
            0xFF, 0x2F, 0x00,
        ]));
        let s = parse_midi(&f).unwrap();
        let onsets: Vec<_> = s
            .events
            .iter()
            .map(|e| (e.onset_tick, e.pitch, e.channel))
            .collect();
        assert_eq!(onsets, vec![(48, 64, 1), (96, 48, 0)]);
        assert_eq!(s.end_tick, 192);
    }

    #[test]
    fn format2_is_unsupported() {
        let mut f = header(2, 1, 480);
        f.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        assert!(matches!(parse_midi(&f), Err(Error::MidiUnsupported(_))));
    }

    #[test]
    fn bad_magic_names_offset_zero() {
        let err = parse_midi(b"RIFF\0\0\0\x06\0\0\0\x01\x01\xe0").unwrap_err();
        assert!(matches!(err, Error::MidiParse { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncated_chunk_reports_chunk_offset() {
        let mut f = header(0, 1, 480);
        let mut t = track(&[0x00, 0x90, 60, 100]);
        t[7] = 50; // claims 50 bytes
        f.extend(t);
        match parse_midi(&f).unwrap_err() {
            Error::MidiParse { offset, reason } => {
                assert_eq!(offset, 14);
                assert!(reason.contains("50"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn data_without_running_status_fails() {
        let mut f = header(0, 1, 480);
        f.extend(track(&[0x00, 60, 100, 0x00, 0xFF, 0x2F, 0x00]));
        match parse_midi(&f).unwrap_err() {
            Error::MidiParse { offset, .. } => assert_eq!(offset, 23),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unterminated_note_closes_at_track_end() {
        let mut f = header(0, 1, 480);
        f.extend(track(&[0x00, 0x90, 60, 100, 0x83, 0x60, 0xFF, 0x2F, 0x00]));
        let s = parse_midi(&f).unwrap();
        assert_eq!(s.events[0].duration_ticks, 480);
    }

    #[test]
    fn writer_round_trips() {
        let notes = vec![
            NoteEvent {
                onset_tick: 0,
                duration_ticks: 120,
                pitch: 60,
                velocity: 64,
                channel: 0,
            },
            NoteEvent {
                onset_tick: 60,
                duration_ticks: 500,
                pitch: 67,
                velocity: 30,
                channel: 2,
            },
        ];
        for zero_off in [false, true] {
            let bytes = testing::write_format0(480, &notes, zero_off);
            assert_eq!(parse_midi(&bytes).unwrap().events, notes);
        }
    }
}
