//! Audio ingestion and the log-mel feature frontend.

pub mod features;
pub mod mel;
pub mod resample;
pub mod spectrogram;
pub mod synth;
pub mod wav;

pub use features::{read_ovf, write_ovf, FeatureDump};
pub use mel::MelFilterbank;
pub use spectrogram::{logmel, FrontendConfig, LogMelFrontend, LogMelSpectrogram};

use crate::error::{OvError, Result};

/// Model sample rate.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(OvError::InvalidConfig("waveform contains non-finite samples".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

/// Decodes a WAV file into 16 kHz mono.
pub fn ingest_audio(bytes: &[u8]) -> Result<Waveform> {
    let wav = wav::read_wav(bytes)?;
    let mono = wav.to_mono();
    let samples = resample::resample(&mono, wav.sample_rate_hz, SAMPLE_RATE_HZ);
    Waveform::new(samples, SAMPLE_RATE_HZ)
}
