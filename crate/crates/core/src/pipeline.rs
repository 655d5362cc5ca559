//! Offline transcription: waveform → log-mel → network → decoder.

use crate::decoder::{decode, DecoderParams};
use crate::dsp::{FrontendConfig, LogMelFrontend, LogMelSpectrogram, Waveform};
use crate::error::{OvError, Result};
use crate::model::{ModelWeights, OvNetwork, Tensor};
use crate::roll::{PianoRoll, Score};

#[derive(Debug, Clone)]
pub struct Transcription {
    pub score: Score,
    pub onset_roll: PianoRoll,
    pub velocity_roll: PianoRoll,
}

/// Network, frontend and decoder settings bundled for repeated use.
pub struct Transcriber {
    net: OvNetwork<f32>,
    frontend: LogMelFrontend,
    decoder: DecoderParams,
    active_stages: usize,
}

impl Transcriber {
    /// `active_stages = None` runs every onset stage.
    pub fn new(weights: &ModelWeights, active_stages: Option<usize>, decoder: DecoderParams) -> Result<Self> {
        let cfg = weights.config();
        let stages = active_stages.unwrap_or(cfg.onset_stage_count);
        if stages == 0 || stages > cfg.onset_stage_count {
            return Err(OvError::InvalidConfig(format!(
                "requested {stages} onset stages, weights have {}",
                cfg.onset_stage_count
            )));
        }
        decoder.validate()?;
        let frontend = LogMelFrontend::new(FrontendConfig {
            n_mels: cfg.mel_bins,
            ..FrontendConfig::default()
        })?;
        Ok(Transcriber {
            net: OvNetwork::from_weights(weights)?,
            frontend,
            decoder,
            active_stages: stages,
        })
    }

    pub fn network(&self) -> &OvNetwork<f32> {
        &self.net
    }

    pub fn frontend(&self) -> &LogMelFrontend {
        &self.frontend
    }

    pub fn decoder(&self) -> &DecoderParams {
        &self.decoder
    }

    pub fn active_stages(&self) -> usize {
        self.active_stages
    }

    pub fn features(&self, w: &Waveform) -> Result<LogMelSpectrogram> {
        self.frontend.compute(w)
    }

    /// Final onset roll and velocity roll for a `1 × 2 × F × T` input.
    pub fn infer(&self, input: &Tensor<f32>) -> Result<(PianoRoll, PianoRoll)> {
        let dt = self.frontend.config().frame_period_s();
        let out = self.net.forward(input, self.active_stages)?;
        Ok((out.final_onset_roll(0, dt), out.velocity_roll(0, dt)))
    }

    pub fn transcribe_features(&self, spec: &LogMelSpectrogram) -> Result<Transcription> {
        let (onset_roll, velocity_roll) = self.infer(&spec.to_input())?;
        let score = decode(&onset_roll, &velocity_roll, &self.decoder)?;
        Ok(Transcription {
            score,
            onset_roll,
            velocity_roll,
        })
    }

    pub fn transcribe(&self, w: &Waveform) -> Result<Transcription> {
        self.transcribe_features(&self.features(w)?)
    }
}
