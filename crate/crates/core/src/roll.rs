//! Note events, scores, and the piano-roll grids used both as training
//! labels and as network outputs.

use serde::{Deserialize, Serialize};

use crate::error::{OvError, Result};

/// Number of piano keys.
pub const NUM_KEYS: usize = 88;
/// MIDI pitch of key 1 (A0) is `KEY_PITCH_OFFSET + 1`.
pub const KEY_PITCH_OFFSET: u8 = 20;
/// Frame period of the 16 kHz / hop 384 feature grid.
pub const FRAME_PERIOD_S: f64 = 0.024;

/// One key press. `key` is 1-based (1 = A0, 88 = C8).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub key: u8,
    pub velocity: f32,
    pub onset_s: f64,
    pub offset_s: Option<f64>,
}

impl NoteEvent {
    pub fn new(key: u8, velocity: f32, onset_s: f64, offset_s: Option<f64>) -> Result<Self> {
        let ev = NoteEvent {
            key,
            velocity,
            onset_s,
            offset_s,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=NUM_KEYS as u8).contains(&self.key) {
            return Err(OvError::InvalidConfig(format!("key {} outside 1..=88", self.key)));
        }
        if !(0.0..=1.0).contains(&self.velocity) {
            return Err(OvError::InvalidConfig(format!(
                "velocity {} outside [0, 1]",
                self.velocity
            )));
        }
        if !(self.onset_s >= 0.0 && self.onset_s.is_finite()) {
            return Err(OvError::InvalidConfig(format!("onset {} must be >= 0", self.onset_s)));
        }
        if let Some(off) = self.offset_s {
            if !(off > self.onset_s) {
                return Err(OvError::InvalidConfig(format!(
                    "offset {off} must follow onset {}",
                    self.onset_s
                )));
            }
        }
        Ok(())
    }

    pub fn midi_pitch(&self) -> u8 {
        self.key + KEY_PITCH_OFFSET
    }

    pub fn end_s(&self) -> f64 {
        self.offset_s.unwrap_or(self.onset_s)
    }
}

/// A collection of note events ordered by onset, then key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    events: Vec<NoteEvent>,
    duration_s: f64,
}

impl Score {
    /// Sorts `events` and stretches `duration_s` to cover the last event.
    pub fn new(mut events: Vec<NoteEvent>, duration_s: f64) -> Self {
        events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then(a.key.cmp(&b.key)));
        let last = events.iter().map(NoteEvent::end_s).fold(0.0, f64::max);
        Score {
            events,
            duration_s: duration_s.max(last),
        }
    }

    pub fn empty() -> Self {
        Score::default()
    }

    pub fn events(&self) -> &[NoteEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<NoteEvent> {
        self.events
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Returns a copy with every onset and offset moved by `delta_s`.
    pub fn shifted(&self, delta_s: f64) -> Score {
        let events = self
            .events
            .iter()
            .map(|e| NoteEvent {
                onset_s: e.onset_s + delta_s,
                offset_s: e.offset_s.map(|o| o + delta_s),
                ..*e
            })
            .collect();
        Score::new(events, self.duration_s + delta_s)
    }
}

/// A `keys × frames` grid of values in `[0, 1]`, stored row-major per key.
#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    keys: usize,
    frames: usize,
    frame_period_s: f64,
    values: Vec<f32>,
}

impl PianoRoll {
    pub fn zeros(keys: usize, frames: usize, frame_period_s: f64) -> Self {
        assert!(frame_period_s > 0.0, "frame period must be positive");
        PianoRoll {
            keys,
            frames,
            frame_period_s,
            values: vec![0.0; keys * frames],
        }
    }

    pub fn from_values(keys: usize, frames: usize, frame_period_s: f64, values: Vec<f32>) -> Result<Self> {
        if values.len() != keys * frames {
            return Err(OvError::shape(
                "piano roll",
                format!("{} values for {keys}x{frames}", values.len()),
            ));
        }
        if frame_period_s <= 0.0 {
            return Err(OvError::InvalidConfig("frame period must be positive".into()));
        }
        Ok(PianoRoll {
            keys,
            frames,
            frame_period_s,
            values,
        })
    }

    pub fn keys(&self) -> usize {
        self.keys
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Value at 0-based key row `row` and frame `t`.
    pub fn get(&self, row: usize, t: usize) -> f32 {
        self.values[row * self.frames + t]
    }

    pub fn set(&mut self, row: usize, t: usize, v: f32) {
        self.values[row * self.frames + t] = v;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.frames..(row + 1) * self.frames]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f32] {
        &mut self.values[row * self.frames..(row + 1) * self.frames]
    }

    pub fn same_shape(&self, other: &PianoRoll) -> bool {
        self.keys == other.keys && self.frames == other.frames
    }

    /// Copy of frames `start..end` (clipped to the roll).
    pub fn slice_frames(&self, start: usize, end: usize) -> PianoRoll {
        let end = end.min(self.frames);
        let start = start.min(end);
        let n = end - start;
        let mut values = Vec::with_capacity(self.keys * n);
        for k in 0..self.keys {
            values.extend_from_slice(&self.row(k)[start..end]);
        }
        PianoRoll {
            keys: self.keys,
            frames: n,
            frame_period_s: self.frame_period_s,
            values,
        }
    }
}

/// Label grids derived from a score.
#[derive(Debug, Clone)]
pub struct QuantizedRolls {
    /// 1 at each onset frame.
    pub onset: PianoRoll,
    /// Onset frame plus `extend` following frames.
    pub extended: PianoRoll,
    /// Velocity at every frame marked in `extended`.
    pub velocity: PianoRoll,
    /// Number of frames where a later onset of the same key overwrote an earlier one.
    pub collisions: usize,
}

/// Frame index of time `t_s`, rounding half up.
pub fn frame_index(t_s: f64, frame_period_s: f64) -> usize {
    // The small bias keeps exact half-frame times (e.g. 0.036 / 0.024) from
    // rounding down through binary representation error.
    let x = t_s / frame_period_s + 0.5 + 1e-9;
    x.floor().max(0.0) as usize
}

/// Quantizes `score` onto a frame grid with period `frame_period_s`.
pub fn quantize(score: &Score, frame_period_s: f64, extend: usize) -> Result<QuantizedRolls> {
    if !(frame_period_s > 0.0) {
        return Err(OvError::InvalidConfig("frame period must be positive".into()));
    }
    let base_frames = (score.duration_s() / frame_period_s).floor() as usize + 1;
    let frames = score
        .events()
        .iter()
        .map(|e| frame_index(e.onset_s, frame_period_s) + 1)
        .fold(base_frames, usize::max);

    let mut onset = PianoRoll::zeros(NUM_KEYS, frames, frame_period_s);
    let mut extended = PianoRoll::zeros(NUM_KEYS, frames, frame_period_s);
    let mut velocity = PianoRoll::zeros(NUM_KEYS, frames, frame_period_s);
    let mut collisions = 0;

    // Events are sorted by onset, so later onsets overwrite earlier ones.
    for ev in score.events() {
        ev.validate()?;
        let row = (ev.key - 1) as usize;
        let t0 = frame_index(ev.onset_s, frame_period_s);
        onset.set(row, t0, 1.0);
        for t in t0..(t0 + extend + 1).min(frames) {
            if extended.get(row, t) > 0.0 {
                collisions += 1;
            }
            extended.set(row, t, 1.0);
            velocity.set(row, t, ev.velocity);
        }
    }
    Ok(QuantizedRolls {
        onset,
        extended,
        velocity,
        collisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(key: u8, v: f32, on: f64) -> NoteEvent {
        NoteEvent::new(key, v, on, None).unwrap()
    }

    #[test]
    fn frame_zero_with_extension() {
        let s = Score::new(vec![ev(40, 0.8, 0.0)], 0.0);
        let q = quantize(&s, 0.024, 2).unwrap();
        let row = 39;
        assert_eq!(q.onset.get(row, 0), 1.0);
        // Roll enlarged only to fit the onset frame; extension clipped.
        assert_eq!(q.onset.frames(), 1);
        let s = Score::new(vec![ev(40, 0.8, 0.0)], 1.0);
        let q = quantize(&s, 0.024, 2).unwrap();
        for t in 0..3 {
            assert_eq!(q.extended.get(row, t), 1.0);
            assert_eq!(q.velocity.get(row, t), 0.8);
        }
        assert_eq!(q.extended.get(row, 3), 0.0);
        assert_eq!(q.onset.get(row, 1), 0.0);
    }

    #[test]
    fn half_frame_rounds_up() {
        assert_eq!(frame_index(0.036, 0.024), 2);
        assert_eq!(frame_index(0.0119, 0.024), 0);
        assert_eq!(frame_index(0.012, 0.024), 1);
    }

    #[test]
    fn onset_past_duration_enlarges_roll() {
        let s = Score::new(vec![ev(1, 0.5, 2.0)], 0.0);
        let q = quantize(&s, 0.024, 2).unwrap();
        assert!(q.onset.frames() > frame_index(2.0, 0.024));
    }

    #[test]
    fn later_onset_wins_collision() {
        let s = Score::new(vec![ev(10, 0.2, 0.0), ev(10, 0.9, 0.024)], 1.0);
        let q = quantize(&s, 0.024, 2).unwrap();
        assert_eq!(q.velocity.get(9, 0), 0.2);
        assert_eq!(q.velocity.get(9, 1), 0.9);
        assert_eq!(q.velocity.get(9, 2), 0.9);
        assert_eq!(q.velocity.get(9, 3), 0.9);
        assert_eq!(q.collisions, 2);
    }

    #[test]
    fn invalid_events_rejected() {
        assert!(NoteEvent::new(0, 0.5, 0.0, None).is_err());
        assert!(NoteEvent::new(89, 0.5, 0.0, None).is_err());
        assert!(NoteEvent::new(1, 1.5, 0.0, None).is_err());
        assert!(NoteEvent::new(1, 0.5, -0.1, None).is_err());
        assert!(NoteEvent::new(1, 0.5, 1.0, Some(1.0)).is_err());
    }

    #[test]
    fn score_sorted_and_duration_covers_events() {
        let s = Score::new(
            vec![
                NoteEvent::new(5, 0.5, 1.0, Some(3.0)).unwrap(),
                ev(3, 0.5, 1.0),
                ev(7, 0.5, 0.5),
            ],
            1.0,
        );
        let keys: Vec<u8> = s.events().iter().map(|e| e.key).collect();
        assert_eq!(keys, vec![7, 3, 5]);
        assert_eq!(s.duration_s(), 3.0);
    }
}
