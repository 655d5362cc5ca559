//! Standard MIDI File reading (format 0 and 1) and writing (format 0).

use std::collections::{HashMap, VecDeque};

use crate::error::{OvError, Result};
use crate::roll::{NoteEvent, Score, KEY_PITCH_OFFSET, NUM_KEYS};

/// Ticks per quarter note used when writing.
pub const WRITE_PPQ: u16 = 960;
/// Microseconds per quarter note used when writing (120 BPM).
pub const WRITE_TEMPO_US: u32 = 500_000;
/// Duration given to onset-only events on write.
pub const SYNTHETIC_DURATION_S: f64 = 0.25;

const DEFAULT_TEMPO_US: u32 = 500_000;

/// Counters for irregularities met while parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MidiParseReport {
    /// Notes with pitch outside 21..=108.
    pub dropped_out_of_range: usize,
    /// Note-ons still open at end of file, closed there.
    pub unmatched_note_on: usize,
    /// Note-offs without a preceding note-on.
    pub orphan_note_off: usize,
    /// Notes whose off coincided with their on; kept without an offset.
    pub zero_length: usize,
}

pub fn parse_midi(bytes: &[u8]) -> Result<Score> {
    parse_midi_with_report(bytes).map(|(s, _)| s)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8> {
        if self.pos >= self.end {
            return Err(OvError::midi(self.pos, "unexpected end of data"));
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.end - self.pos < n {
            return Err(OvError::midi(self.pos, format!("need {n} bytes, chunk ends")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn vlq(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut v: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(OvError::midi(start, "variable-length quantity longer than 4 bytes"))
    }
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

#[derive(Debug, Clone, Copy)]
enum Raw {
    On { ch: u8, pitch: u8, vel: u8 },
    Off { ch: u8, pitch: u8 },
    Tempo(u32),
}

/// Parses a Standard MIDI File, reporting dropped and repaired notes.
pub fn parse_midi_with_report(bytes: &[u8]) -> Result<(Score, MidiParseReport)> {
    if bytes.len() < 14 || &bytes[0..4] != b"MThd" {
        return Err(OvError::midi(0, "missing MThd header"));
    }
    let hlen = be_u32(&bytes[4..8]) as usize;
    if hlen < 6 || bytes.len() < 8 + hlen {
        return Err(OvError::midi(4, format!("bad header length {hlen}")));
    }
    let format = u16::from_be_bytes([bytes[8], bytes[9]]);
    let ntrks = u16::from_be_bytes([bytes[10], bytes[11]]);
    let division = u16::from_be_bytes([bytes[12], bytes[13]]);
    if format > 1 {
        return Err(OvError::midi(8, format!("unsupported MIDI format {format}")));
    }
    if division == 0 {
        return Err(OvError::midi(12, "zero time division"));
    }

    // (tick, track, seq, event)
    let mut raw: Vec<(u64, usize, usize, Raw)> = Vec::new();
    let mut pos = 8 + hlen;
    let mut track = 0usize;
    let mut last_tick = 0u64;
    while track < ntrks as usize {
        if pos == bytes.len() {
            return Err(OvError::midi(pos, format!("expected {ntrks} tracks, found {track}")));
        }
        if bytes.len() - pos < 8 {
            return Err(OvError::midi(pos, "truncated chunk header"));
        }
        let id = &bytes[pos..pos + 4];
        let len = be_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body = pos + 8;
        if bytes.len() - body < len {
            return Err(OvError::midi(pos + 4, format!("chunk length {len} exceeds file")));
        }
        if id != b"MTrk" {
            pos = body + len;
            continue;
        }
        let mut r = Reader {
            bytes,
            pos: body,
            end: body + len,
        };
        let mut tick = 0u64;
        let mut status: Option<u8> = None;
        let mut seq = 0usize;
        while r.pos < r.end {
            tick += u64::from(r.vlq()?);
            let at = r.pos;
            let mut b = r.u8()?;
            if b < 0x80 {
                // running status: this byte is the first data byte
                b = status.ok_or_else(|| OvError::midi(at, "running status without prior status"))?;
                r.pos -= 1;
            }
            match b {
                0xff => {
                    let kind = r.u8()?;
                    let n = r.vlq()? as usize;
                    let data = r.take(n)?;
                    if kind == 0x51 && n == 3 {
                        let us = (u32::from(data[0]) << 16) | (u32::from(data[1]) << 8) | u32::from(data[2]);
                        raw.push((tick, track, seq, Raw::Tempo(us)));
                        seq += 1;
                    }
                    if kind == 0x2f {
                        break;
                    }
                }
                0xf0 | 0xf7 => {
                    let n = r.vlq()? as usize;
                    r.take(n)?;
                }
                0x80..=0xef => {
                    status = Some(b);
                    let ch = b & 0x0f;
                    match b & 0xf0 {
                        0x80 => {
                            let pitch = r.u8()? & 0x7f;
                            r.u8()?;
                            raw.push((tick, track, seq, Raw::Off { ch, pitch }));
                            seq += 1;
                        }
                        0x90 => {
                            let pitch = r.u8()? & 0x7f;
                            let vel = r.u8()? & 0x7f;
                            let ev = if vel == 0 {
                                Raw::Off { ch, pitch }
                            } else {
                                Raw::On { ch, pitch, vel }
                            };
                            raw.push((tick, track, seq, ev));
                            seq += 1;
                        }
                        0xc0 | 0xd0 => {
                            r.u8()?;
                        }
                        _ => {
                            r.u8()?;
                            r.u8()?;
                        }
                    }
                }
                _ => return Err(OvError::midi(at, format!("unexpected status byte 0x{b:02x}"))),
            }
        }
        last_tick = last_tick.max(tick);
        pos = body + len;
        track += 1;
    }

    raw.sort_by_key(|&(tick, trk, seq, _)| (tick, trk, seq));
    let tempo_map = TempoMap::new(
        division,
        raw.iter().filter_map(|&(t, _, _, e)| match e {
            Raw::Tempo(us) => Some((t, us)),
            _ => None,
        }),
    );

    let mut report = MidiParseReport::default();
    let mut open: HashMap<(u8, u8), VecDeque<(f64, u8)>> = HashMap::new();
    let mut events = Vec::new();
    let lo = KEY_PITCH_OFFSET + 1;
    let hi = KEY_PITCH_OFFSET + NUM_KEYS as u8;
    let mut close = |pitch: u8, vel: u8, on: f64, off: f64, report: &mut MidiParseReport| {
        if !(lo..=hi).contains(&pitch) {
            report.dropped_out_of_range += 1;
            return;
        }
        let offset = if off > on {
            Some(off)
        } else {
            report.zero_length += 1;
            None
        };
        events.push(NoteEvent {
            key: pitch - KEY_PITCH_OFFSET,
            velocity: f32::from(vel) / 127.0,
            onset_s: on,
            offset_s: offset,
        });
    };
    for &(tick, _, _, ev) in &raw {
        let t = tempo_map.seconds(tick);
        match ev {
            Raw::On { ch, pitch, vel } => open.entry((ch, pitch)).or_default().push_back((t, vel)),
            Raw::Off { ch, pitch } => match open.get_mut(&(ch, pitch)).and_then(VecDeque::pop_front) {
                Some((on, vel)) => close(pitch, vel, on, t, &mut report),
                None => report.orphan_note_off += 1,
            },
            Raw::Tempo(_) => {}
        }
    }
    let end_s = tempo_map.seconds(last_tick);
    let mut leftovers: Vec<_> = open
        .into_iter()
        .flat_map(|((_, pitch), q)| q.into_iter().map(move |(on, vel)| (pitch, on, vel)))
        .collect();
    leftovers.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    for (pitch, on, vel) in leftovers {
        report.unmatched_note_on += 1;
        close(pitch, vel, on, end_s, &mut report);
    }
    Ok((Score::new(events, end_s), report))
}

/// Piecewise-linear tick to seconds conversion.
struct TempoMap {
    /// (start tick, start seconds, seconds per tick)
    segments: Vec<(u64, f64, f64)>,
}

impl TempoMap {
    fn new(division: u16, changes: impl Iterator<Item = (u64, u32)>) -> Self {
        if division & 0x8000 != 0 {
            // SMPTE: -frames per second in the high byte, ticks per frame in the low byte.
            let fps = -((division >> 8) as u8 as i8) as f64;
            let fps = if fps == 29.0 { 29.97 } else { fps };
            let tpf = f64::from(division & 0xff);
            return TempoMap {
                segments: vec![(0, 0.0, 1.0 / (fps * tpf))],
            };
        }
        let ppq = f64::from(division);
        let spt = |us: u32| f64::from(us) * 1e-6 / ppq;
        let mut segments = vec![(0u64, 0.0, spt(DEFAULT_TEMPO_US))];
        for (tick, us) in changes {
            let &(t0, s0, rate) = segments.last().unwrap();
            let s = s0 + (tick - t0) as f64 * rate;
            if tick == t0 {
                segments.pop();
            }
            segments.push((tick, s, spt(us)));
        }
        TempoMap { segments }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let i = self.segments.partition_point(|&(t, _, _)| t <= tick).saturating_sub(1);
        let (t0, s0, rate) = self.segments[i];
        s0 + (tick - t0) as f64 * rate
    }
}

fn push_vlq(out: &mut Vec<u8>, mut v: u32) {
    let mut buf = [0u8; 5];
    let mut n = 0;
    loop {
        buf[n] = (v & 0x7f) as u8;
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

/// MIDI velocity for a normalized velocity: `round(v * 127)` clamped to `1..=127`.
pub fn denormalize_velocity(v: f32) -> u8 {
    (v * 127.0).round().clamp(1.0, 127.0) as u8
}

/// Writes `score` as a format-0 file at 960 PPQ and a fixed 120 BPM tempo.
pub fn write_midi(score: &Score) -> Vec<u8> {
    let ticks_per_s = f64::from(WRITE_PPQ) * 1e6 / f64::from(WRITE_TEMPO_US);
    let to_tick = |s: f64| (s * ticks_per_s).round().max(0.0) as u64;

    // (tick, is_on, pitch, vel); offs sort before ons at equal ticks.
    let mut msgs: Vec<(u64, bool, u8, u8)> = Vec::with_capacity(score.len() * 2);
    for ev in score.events() {
        let on = to_tick(ev.onset_s);
        let off_s = ev.offset_s.unwrap_or(ev.onset_s + SYNTHETIC_DURATION_S);
        let off = to_tick(off_s).max(on + 1);
        let pitch = ev.midi_pitch();
        msgs.push((on, true, pitch, denormalize_velocity(ev.velocity)));
        msgs.push((off, false, pitch, 0));
    }
    msgs.sort_by_key(|&(t, on, pitch, _)| (t, on, pitch));

    let mut trk = Vec::with_capacity(16 + msgs.len() * 5);
    trk.extend_from_slice(&[0x00, 0xff, 0x51, 0x03]);
    trk.extend_from_slice(&WRITE_TEMPO_US.to_be_bytes()[1..]);
    let mut last = 0u64;
    for (tick, on, pitch, vel) in msgs {
        push_vlq(&mut trk, (tick - last) as u32);
        last = tick;
        if on {
            trk.extend_from_slice(&[0x90, pitch, vel]);
        } else {
            trk.extend_from_slice(&[0x80, pitch, 0x40]);
        }
    }
    trk.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(22 + trk.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&WRITE_PPQ.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(trk.len() as u32).to_be_bytes());
    out.extend_from_slice(&trk);
    out
}
