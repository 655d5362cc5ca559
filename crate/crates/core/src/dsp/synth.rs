//! Deterministic test audio: decaying harmonic tones at note pitches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::roll::{NoteEvent, Score, NUM_KEYS};

/// Fundamental of 1-based key `key` (key 49 = A4 = 440 Hz).
pub fn key_frequency_hz(key: u8) -> f64 {
    440.0 * 2f64.powf((f64::from(key) - 49.0) / 12.0)
}

/// Renders each event as four decaying harmonics scaled by velocity.
/// Onset-only events ring for 0.5 s.
pub fn render_score(score: &Score, sample_rate_hz: u32) -> Vec<f32> {
    let sr = f64::from(sample_rate_hz);
    let n = (score.duration_s() * sr).ceil() as usize + 1;
    let mut out = vec![0.0f64; n];
    for e in score.events() {
        let f0 = key_frequency_hz(e.key);
        let start = (e.onset_s * sr).round() as usize;
        let end = ((e.offset_s.unwrap_or(e.onset_s + 0.5)) * sr).round() as usize;
        let amp = 0.2 * f64::from(e.velocity);
        for (i, o) in out.iter_mut().enumerate().take(end.min(n)).skip(start) {
            let t = (i - start) as f64 / sr;
            let env = (-3.0 * t).exp();
            let mut v = 0.0;
            for h in 1..=4u32 {
                let f = f0 * f64::from(h);
                if f < sr / 2.0 {
                    v += (2.0 * std::f64::consts::PI * f * t).sin() / f64::from(h);
                }
            }
            *o += amp * env * v;
        }
    }
    out.into_iter().map(|v| v as f32).collect()
}

/// `notes` random events over `duration_s`, keys drawn from `1..=max_key`.
pub fn random_score(seed: u64, duration_s: f64, notes: usize, max_key: u8) -> Score {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_key = max_key.clamp(1, NUM_KEYS as u8);
    let events = (0..notes)
        .map(|_| {
            let onset = rng.random_range(0.0..duration_s.max(1e-3));
            let len = rng.random_range(0.1..0.8);
            NoteEvent {
                key: rng.random_range(1..=max_key),
                velocity: rng.random_range(0.2f32..1.0),
                onset_s: onset,
                offset_s: Some((onset + len).min(duration_s)),
            }
        })
        .collect();
    Score::new(events, duration_s)
}
