//! Chunked real-time transcription.
//!
//! Features are computed incrementally as soon as a frame's analysis window
//! is fully buffered. Every `chunk_hop_frames` completed frames the network
//! is re-run over the last `context_s` seconds of features and the decoder
//! finalizes peaks that are at least `emit_lookahead_frames` old. Recompute
//! points sit on a fixed frame grid, so the emitted events do not depend on
//! how the caller splits the audio into chunks.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decoder::{detect_onsets, peak_event};
use crate::dsp::Waveform;
use crate::error::{OvError, Result};
use crate::model::Tensor;
use crate::pipeline::Transcriber;
use crate::roll::NoteEvent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub context_s: f64,
    pub emit_lookahead_frames: usize,
    pub chunk_hop_frames: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            context_s: 4.0,
            emit_lookahead_frames: 5,
            chunk_hop_frames: 21,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self, kernel_radius: usize, frame_period_s: f64) -> Result<()> {
        if !(self.context_s >= 1.0) {
            return Err(OvError::InvalidConfig("context must be at least 1 s".into()));
        }
        if self.emit_lookahead_frames < kernel_radius + 1 {
            return Err(OvError::InvalidConfig(format!(
                "lookahead {} below smoothing radius + 1 = {}",
                self.emit_lookahead_frames,
                kernel_radius + 1
            )));
        }
        if self.chunk_hop_frames == 0 {
            return Err(OvError::InvalidConfig("chunk hop must be positive".into()));
        }
        let window = self.window_frames(frame_period_s);
        if window < self.chunk_hop_frames + self.emit_lookahead_frames + kernel_radius + 2 {
            return Err(OvError::InvalidConfig(format!(
                "context of {window} frames too short for hop {} and lookahead {}",
                self.chunk_hop_frames, self.emit_lookahead_frames
            )));
        }
        Ok(())
    }

    pub fn window_frames(&self, frame_period_s: f64) -> usize {
        (self.context_s / frame_period_s).round() as usize
    }
}

/// Incremental transcription state for one audio stream.
pub struct StreamState {
    transcriber: Arc<Transcriber>,
    config: StreamConfig,
    window: usize,
    /// Samples from global index `sample_start` on.
    samples: VecDeque<f32>,
    sample_start: usize,
    total_samples: usize,
    /// Log-mel frames from global frame `frame_start` on, one `Vec` per frame.
    frames: VecDeque<Vec<f32>>,
    frame_start: usize,
    /// Frames with fully buffered analysis windows.
    complete: usize,
    /// Frames below this index are final.
    frontier: usize,
    flushed: bool,
}

impl StreamState {
    pub fn new(transcriber: Arc<Transcriber>, config: StreamConfig) -> Result<Self> {
        let dt = transcriber.frontend().config().frame_period_s();
        config.validate(transcriber.decoder().kernel_radius, dt)?;
        Ok(StreamState {
            window: config.window_frames(dt),
            transcriber,
            config,
            samples: VecDeque::new(),
            sample_start: 0,
            total_samples: 0,
            frames: VecDeque::new(),
            frame_start: 0,
            complete: 0,
            frontier: 0,
            flushed: false,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    /// Total frames observed so far.
    pub fn clock_frames(&self) -> usize {
        self.complete
    }

    /// Number of finalized frames.
    pub fn frontier(&self) -> usize {
        self.frontier
    }

    /// Buffered samples plus cached frames; bounded by the context length.
    pub fn buffered(&self) -> (usize, usize) {
        (self.samples.len(), self.frames.len())
    }

    pub fn reset(&mut self) {
        self.samples.clear();
        self.frames.clear();
        self.sample_start = 0;
        self.total_samples = 0;
        self.frame_start = 0;
        self.complete = 0;
        self.frontier = 0;
        self.flushed = false;
    }

    fn hop(&self) -> usize {
        self.transcriber.frontend().config().hop
    }

    fn half_window(&self) -> usize {
        self.transcriber.frontend().config().n_fft / 2
    }

    /// Appends 16 kHz mono samples and returns newly finalized events.
    pub fn push_samples(&mut self, samples: &[f32]) -> Result<Vec<NoteEvent>> {
        if self.flushed {
            return Err(OvError::InvalidConfig("stream already flushed; reset before reuse".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(OvError::InvalidConfig("non-finite audio sample".into()));
        }
        self.samples.extend(samples);
        self.total_samples += samples.len();
        let (hop, half) = (self.hop(), self.half_window());
        let mut events = Vec::new();
        while self.complete * hop + half <= self.total_samples {
            let frame = self.compute_frames(self.complete, 1);
            self.frames.push_back(frame.into_iter().next().expect("one frame"));
            self.complete += 1;
            if self.complete.is_multiple_of(self.config.chunk_hop_frames) {
                let end = self.complete;
                let until = end.saturating_sub(self.config.emit_lookahead_frames);
                events.extend(self.evaluate_window(end, until)?);
            }
            self.trim();
        }
        Ok(events)
    }

    /// Finalizes every remaining frame, padding the right edge as the
    /// offline frontend does. A second call returns nothing.
    pub fn flush(&mut self) -> Result<Vec<NoteEvent>> {
        if self.flushed || self.total_samples == 0 {
            self.flushed = true;
            return Ok(Vec::new());
        }
        self.flushed = true;
        let total = self.transcriber.frontend().config().frame_count(self.total_samples);
        if total > self.complete {
            let tail = self.compute_frames(self.complete, total - self.complete);
            self.frames.extend(tail);
            self.complete = total;
        }
        self.evaluate_window(total, total)
    }

    /// Consumes a whole waveform in one go.
    pub fn run(&mut self, w: &Waveform) -> Result<Vec<NoteEvent>> {
        let mut ev = self.push_samples(&w.samples)?;
        ev.extend(self.flush()?);
        Ok(ev)
    }

    fn compute_frames(&self, first: usize, count: usize) -> Vec<Vec<f32>> {
        let (slice_a, slice_b) = self.samples.as_slices();
        let buf: Vec<f32>;
        let samples = if slice_b.is_empty() {
            slice_a
        } else {
            buf = self.samples.iter().copied().collect();
            &buf
        };
        let bins = self.transcriber.frontend().config().n_mels;
        let flat = self
            .transcriber
            .frontend()
            .frames_from(samples, self.sample_start, first, count);
        (0..count)
            .map(|j| (0..bins).map(|f| flat[f * count + j]).collect())
            .collect()
    }

    /// Drops samples no future frame needs and frames outside the context.
    fn trim(&mut self) {
        let keep_from = (self.complete * self.hop()).saturating_sub(self.half_window());
        while self.sample_start < keep_from && !self.samples.is_empty() {
            self.samples.pop_front();
            self.sample_start += 1;
        }
        let keep_frames = self.complete.saturating_sub(self.window + 1);
        while self.frame_start < keep_frames {
            self.frames.pop_front();
            self.frame_start += 1;
        }
    }

    /// Runs the network over frames `end - window .. end` and emits peaks in
    /// `frontier .. until`.
    fn evaluate_window(&mut self, end: usize, until: usize) -> Result<Vec<NoteEvent>> {
        let start = end.saturating_sub(self.window);
        let n = end - start;
        let bins = self.transcriber.frontend().config().n_mels;
        let frame = |t: usize| &self.frames[t - self.frame_start];
        let mut data = vec![0.0f32; 2 * bins * n];
        let (values, deriv) = data.split_at_mut(bins * n);
        for j in 0..n {
            let cur = frame(start + j);
            let prev = if start + j > 0 { Some(frame(start + j - 1)) } else { None };
            for f in 0..bins {
                values[f * n + j] = cur[f];
                deriv[f * n + j] = prev.map_or(0.0, |p| cur[f] - p[f]);
            }
        }
        let input = Tensor::from_vec([1, 2, bins, n], data)?;
        let (onset, velocity) = self.transcriber.infer(&input)?;
        let params = *self.transcriber.decoder();
        let mut events: Vec<NoteEvent> = detect_onsets(&onset, &params)
            .into_iter()
            .filter(|&(_, t)| (self.frontier..until).contains(&(start + t)))
            .map(|(k, t)| peak_event(&velocity, k, t, start, &params))
            .collect();
        events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then(a.key.cmp(&b.key)));
        self.frontier = self.frontier.max(until);
        Ok(events)
    }
}

/// Per-stage timing of the offline pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RtfRow {
    pub active_stages: usize,
    pub seconds: f64,
    pub rtf: f64,
    pub events: usize,
}

/// Wall-clock time of feature extraction, network and decoding divided by
/// the audio duration, for each stage count `1..=n`. Runs on the current
/// rayon pool.
pub fn benchmark_rtf(weights: &crate::model::ModelWeights, audio: &Waveform) -> Result<Vec<RtfRow>> {
    let duration = audio.duration_s().max(f64::MIN_POSITIVE);
    (1..=weights.config().onset_stage_count)
        .map(|stages| {
            let t = Transcriber::new(weights, Some(stages), Default::default())?;
            let clock = Instant::now();
            let out = t.transcribe(audio)?;
            let seconds = clock.elapsed().as_secs_f64();
            Ok(RtfRow {
                active_stages: stages,
                seconds,
                rtf: seconds / duration,
                events: out.score.len(),
            })
        })
        .collect()
}

/// Same ratio for the streaming path, pushing `chunk`-sample blocks.
pub fn benchmark_stream_rtf(transcriber: Arc<Transcriber>, config: StreamConfig, audio: &Waveform, chunk: usize) -> Result<f64> {
    let mut s = StreamState::new(transcriber, config)?;
    let clock = Instant::now();
    for c in audio.samples.chunks(chunk.max(1)) {
        s.push_samples(c)?;
    }
    s.flush()?;
    Ok(clock.elapsed().as_secs_f64() / audio.duration_s().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::DecoderParams;
    use crate::model::{ModelConfig, ModelWeights};

    fn micro_stream() -> StreamState {
        let w = ModelWeights::zeros(ModelConfig::micro()).unwrap();
        let t = Transcriber::new(&w, None, DecoderParams::default()).unwrap();
        StreamState::new(Arc::new(t), StreamConfig::default()).unwrap()
    }

    #[test]
    fn silence_emits_nothing() {
        let mut s = micro_stream();
        assert!(s.push_samples(&vec![0.0; 48_000]).unwrap().is_empty());
        assert!(s.flush().unwrap().is_empty());
        assert!(s.flush().unwrap().is_empty());
        assert!(s.push_samples(&[0.0]).is_err());
        s.reset();
        assert!(s.push_samples(&[0.0]).unwrap().is_empty());
    }

    #[test]
    fn memory_bounded() {
        let mut s = micro_stream();
        for _ in 0..40 {
            s.push_samples(&vec![0.01; 16_000]).unwrap();
        }
        let (samples, frames) = s.buffered();
        assert!(samples <= 2048 + 384);
        assert!(frames <= 168);
        assert_eq!(s.clock_frames(), (640_000 - 1024) / 384 + 1);
    }

    #[test]
    fn config_validated() {
        let c = StreamConfig {
            emit_lookahead_frames: 4,
            ..Default::default()
        };
        assert!(c.validate(4, 0.024).is_err());
        let c = StreamConfig {
            context_s: 0.5,
            ..Default::default()
        };
        assert!(c.validate(4, 0.024).is_err());
    }
}
