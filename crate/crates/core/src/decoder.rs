//! Onset decoding: temporal Gaussian smoothing, non-maximum suppression,
//! thresholding and a constant time shift.

use serde::{Deserialize, Serialize};

use crate::error::{OvError, Result};
use crate::roll::{NoteEvent, PianoRoll, Score};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    /// Smoothing standard deviation, in frames.
    pub sigma_frames: f64,
    /// Minimum smoothed probability at a peak.
    pub threshold: f64,
    /// Added to every decoded onset time.
    pub shift_s: f64,
    pub kernel_radius: usize,
}

impl Default for DecoderParams {
    fn default() -> Self {
        DecoderParams {
            sigma_frames: 1.0,
            threshold: 0.74,
            shift_s: -0.01,
            kernel_radius: 4,
        }
    }
}

impl DecoderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_frames > 0.0) {
            return Err(OvError::InvalidConfig("sigma must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(OvError::InvalidConfig("threshold must lie in (0, 1)".into()));
        }
        if (self.kernel_radius as f64) < (3.0 * self.sigma_frames).ceil() {
            return Err(OvError::InvalidConfig(format!(
                "kernel radius {} below ceil(3 sigma)",
                self.kernel_radius
            )));
        }
        if !self.shift_s.is_finite() {
            return Err(OvError::InvalidConfig("shift must be finite".into()));
        }
        Ok(())
    }
}

/// Normalized Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    let w: Vec<f64> = (-r..=r)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Smooths each key row along time with reflect boundaries.
pub fn gaussian_smooth(roll: &PianoRoll, sigma: f64, radius: usize) -> PianoRoll {
    let kernel = gaussian_kernel(sigma, radius);
    let n = roll.frames();
    let mut out = PianoRoll::zeros(roll.keys(), n, roll.frame_period_s());
    if n == 0 {
        return out;
    }
    let r = radius as i64;
    for k in 0..roll.keys() {
        let src = roll.row(k);
        let dst = out.row_mut(k);
        for (t, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (j, &w) in kernel.iter().enumerate() {
                let idx = t as i64 + j as i64 - r;
                let v = if (0..n as i64).contains(&idx) {
                    src[idx as usize]
                } else {
                    src[reflect(idx, n)]
                };
                acc += w * f64::from(v);
            }
            *d = acc as f32;
        }
    }
    out
}

/// Local maxima along time at or above `threshold`, as `(key_row, frame)`.
///
/// A frame must exceed its left neighbour and be no smaller than its right
/// one, so a plateau reports its first frame.
pub fn nms_peaks(roll: &PianoRoll, threshold: f64) -> Vec<(usize, usize)> {
    let n = roll.frames();
    let mut peaks = Vec::new();
    for k in 0..roll.keys() {
        let row = roll.row(k);
        for t in 0..n {
            let v = row[t];
            if f64::from(v) < threshold {
                continue;
            }
            let left_ok = t == 0 || v > row[t - 1];
            let right_ok = t + 1 == n || v >= row[t + 1];
            if left_ok && right_ok {
                peaks.push((k, t));
            }
        }
    }
    peaks
}

/// Peak coordinates surviving smoothing, NMS and thresholding.
pub fn detect_onsets(onset_roll: &PianoRoll, params: &DecoderParams) -> Vec<(usize, usize)> {
    let smoothed = gaussian_smooth(onset_roll, params.sigma_frames, params.kernel_radius);
    nms_peaks(&smoothed, params.threshold)
}

/// Event for a detected peak; velocity is read from `velocity_roll`.
pub fn peak_event(velocity_roll: &PianoRoll, row: usize, frame: usize, frame_offset: usize, params: &DecoderParams) -> NoteEvent {
    let dt = velocity_roll.frame_period_s();
    NoteEvent {
        key: (row + 1) as u8,
        velocity: velocity_roll.get(row, frame).clamp(0.0, 1.0),
        onset_s: (dt * (frame + frame_offset) as f64 + params.shift_s).max(0.0),
        offset_s: None,
    }
}

pub fn decode(onset_roll: &PianoRoll, velocity_roll: &PianoRoll, params: &DecoderParams) -> Result<Score> {
    params.validate()?;
    if !onset_roll.same_shape(velocity_roll) || onset_roll.frame_period_s() != velocity_roll.frame_period_s() {
        return Err(OvError::shape(
            "decoder",
            format!(
                "onset roll {}x{} vs velocity roll {}x{}",
                onset_roll.keys(),
                onset_roll.frames(),
                velocity_roll.keys(),
                velocity_roll.frames()
            ),
        ));
    }
    let events = detect_onsets(onset_roll, params)
        .into_iter()
        .map(|(k, t)| peak_event(velocity_roll, k, t, 0, params))
        .collect();
    let duration = onset_roll.frames() as f64 * onset_roll.frame_period_s();
    Ok(Score::new(events, duration))
}
