//! Centered STFT and log-mel features.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::mel::MelFilterbank;
use super::Waveform;
use crate::error::{OvError, Result};
use crate::model::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            sample_rate_hz: 16_000,
            n_fft: 2048,
            hop: 384,
            n_mels: 229,
            fmin_hz: 50.0,
            fmax_hz: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn frame_period_s(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate_hz)
    }

    /// Number of frames for `n_samples` input samples.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        n_samples / self.hop + 1
    }
}

/// Log-mel features `X` and their frame-to-frame difference, both `bins × frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    bins: usize,
    frames: usize,
    frame_period_s: f64,
    values: Vec<f32>,
    derivative: Vec<f32>,
}

impl LogMelSpectrogram {
    /// Builds from log-mel values; computes the derivative.
    pub fn from_values(bins: usize, frames: usize, frame_period_s: f64, values: Vec<f32>) -> Result<Self> {
        if values.len() != bins * frames {
            return Err(OvError::shape("log-mel", format!("{} values for {bins}x{frames}", values.len())));
        }
        let mut derivative = vec![0.0f32; values.len()];
        for f in 0..bins {
            let row = &values[f * frames..(f + 1) * frames];
            let d = &mut derivative[f * frames..(f + 1) * frames];
            for t in 1..frames {
                d[t] = row[t] - row[t - 1];
            }
        }
        Ok(LogMelSpectrogram {
            bins,
            frames,
            frame_period_s,
            values,
            derivative,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
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

    pub fn derivative(&self) -> &[f32] {
        &self.derivative
    }

    pub fn value(&self, bin: usize, t: usize) -> f32 {
        self.values[bin * self.frames + t]
    }

    /// Network input `1 × 2 × bins × frames` (values stacked over derivative).
    pub fn to_input(&self) -> Tensor<f32> {
        let mut data = Vec::with_capacity(2 * self.values.len());
        data.extend_from_slice(&self.values);
        data.extend_from_slice(&self.derivative);
        Tensor::from_vec([1, 2, self.bins, self.frames], data).expect("consistent by construction")
    }

    /// Frames `start..end` with the derivative recomputed at the new first frame.
    pub fn slice_frames(&self, start: usize, end: usize) -> LogMelSpectrogram {
        let end = end.min(self.frames);
        let start = start.min(end);
        let n = end - start;
        let mut values = Vec::with_capacity(self.bins * n);
        for f in 0..self.bins {
            values.extend_from_slice(&self.values[f * self.frames + start..f * self.frames + end]);
        }
        LogMelSpectrogram::from_values(self.bins, n, self.frame_period_s, values).expect("sized above")
    }
}

/// Reflect index into `0..n` without repeating the edge sample.
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Reusable STFT + mel projection. Immutable after construction.
pub struct LogMelFrontend {
    config: FrontendConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: MelFilterbank,
}

impl LogMelFrontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        if config.hop == 0 || config.n_fft < 2 {
            return Err(OvError::InvalidConfig("hop and n_fft must be positive".into()));
        }
        let filterbank = MelFilterbank::new(
            config.n_fft,
            config.n_mels,
            config.fmin_hz,
            config.fmax_hz,
            f64::from(config.sample_rate_hz),
        )?;
        let n = config.n_fft;
        // periodic Hann
        let window = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(LogMelFrontend {
            config,
            fft,
            window,
            filterbank,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Power spectrum (`n_fft/2 + 1` bins) of the frame centered at `center`.
    pub fn power_frame(&self, samples: &[f32], center: i64, buf: &mut Vec<Complex<f64>>, out: &mut [f64]) {
        let n = self.config.n_fft;
        let start = center - (n / 2) as i64;
        buf.clear();
        buf.extend((0..n).map(|i| {
            let s = samples[reflect(start + i as i64, samples.len())];
            Complex::new(f64::from(s) * self.window[i], 0.0)
        }));
        self.fft.process(buf);
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.norm_sqr();
        }
    }

    /// Log-mel frames `first..first+count` of `samples`, frame `t` centered at `t * hop`.
    pub fn frames(&self, samples: &[f32], first: usize, count: usize) -> Vec<f32> {
        self.frames_from(samples, 0, first, count)
    }

    /// As [`frames`](Self::frames) for a buffer whose first element is
    /// sample `sample_offset` of the stream. Reflection happens at the buffer
    /// edges, so frames must lie a half window inside any edge that is not
    /// also a stream edge.
    pub fn frames_from(&self, samples: &[f32], sample_offset: usize, first: usize, count: usize) -> Vec<f32> {
        let bins = self.config.n_mels;
        let mut values = vec![0.0f32; bins * count];
        if samples.is_empty() {
            return values;
        }
        let mut buf = Vec::with_capacity(self.config.n_fft);
        let mut power = vec![0.0; self.filterbank.n_bins()];
        let mut mel = vec![0.0; bins];
        for j in 0..count {
            let center = ((first + j) * self.config.hop) as i64 - sample_offset as i64;
            self.power_frame(samples, center, &mut buf, &mut power);
            self.filterbank.project(&power, &mut mel);
            for (f, &m) in mel.iter().enumerate() {
                values[f * count + j] = m.max(self.config.log_floor).ln() as f32;
            }
        }
        values
    }

    pub fn compute(&self, w: &Waveform) -> Result<LogMelSpectrogram> {
        if w.sample_rate_hz != self.config.sample_rate_hz {
            return Err(OvError::InvalidConfig(format!(
                "waveform at {} Hz, frontend expects {}",
                w.sample_rate_hz, self.config.sample_rate_hz
            )));
        }
        if w.samples.is_empty() {
            return Err(OvError::InvalidConfig("empty waveform".into()));
        }
        let frames = self.config.frame_count(w.samples.len());
        let values = self.frames(&w.samples, 0, frames);
        LogMelSpectrogram::from_values(self.config.n_mels, frames, self.config.frame_period_s(), values)
    }
}

/// Log-mel features with the default 16 kHz configuration.
pub fn logmel(w: &Waveform) -> Result<LogMelSpectrogram> {
    LogMelFrontend::new(FrontendConfig::default())?.compute(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
    }

    #[test]
    fn zero_waveform_hits_floor() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let s = logmel(&w).unwrap();
        assert_eq!(s.frames(), 42);
        let floor = (1e-10f64).ln() as f32;
        assert!(s.values().iter().all(|&v| v == floor));
        assert!(s.derivative().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sample_gives_one_frame() {
        let w = Waveform::new(vec![0.3], 16000).unwrap();
        assert_eq!(logmel(&w).unwrap().frames(), 1);
    }

    #[test]
    fn derivative_definition() {
        let s = LogMelSpectrogram::from_values(1, 4, 0.024, vec![1.0, 3.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.derivative(), &[0.0, 2.0, -1.0, 0.0]);
    }
}
