use serde::{Deserialize, Serialize};

use crate::error::{OvError, Result};

/// How successive onset stages are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualDomain {
    /// Stage logits are summed; a sigmoid follows each partial sum.
    #[default]
    Logit,
    /// Per-stage probabilities are summed and clamped to `[0, 1]`.
    Probability,
}

/// Architecture hyperparameters of the onset/velocity network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub mel_bins: usize,
    pub keys: usize,
    pub stem_channels: usize,
    pub stage_channels: usize,
    pub mlp_width: usize,
    pub attention_hidden: usize,
    pub stem_conv_kernel: (usize, usize),
    pub stem_cam_count: usize,
    pub stem_cam_dilations: Vec<usize>,
    pub stem_cam_kernel: (usize, usize),
    pub stage_cam_count: usize,
    pub stage_cam_dilations: Vec<usize>,
    pub stage_cam_kernel: (usize, usize),
    pub collapse_kernel_width: usize,
    pub velocity_cam_count: usize,
    pub onset_stage_count: usize,
    pub leaky_slope: f64,
    pub bn_eps: f64,
    pub residual_domain: ResidualDomain,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 2,
            mel_bins: 229,
            keys: 88,
            stem_channels: 16,
            stage_channels: 12,
            mlp_width: 200,
            attention_hidden: 8,
            stem_conv_kernel: (3, 3),
            stem_cam_count: 3,
            stem_cam_dilations: vec![1, 2, 3, 4],
            stem_cam_kernel: (3, 5),
            stage_cam_count: 3,
            stage_cam_dilations: vec![1, 2, 3],
            stage_cam_kernel: (1, 11),
            collapse_kernel_width: 3,
            velocity_cam_count: 1,
            onset_stage_count: 3,
            leaky_slope: 0.1,
            bn_eps: 1e-5,
            residual_domain: ResidualDomain::Logit,
        }
    }
}

impl ModelConfig {
    /// The published architecture.
    pub fn paper() -> Self {
        Self::default()
    }

    /// A few-thousand-parameter variant for gradient checks and unit tests.
    pub fn micro() -> Self {
        ModelConfig {
            mel_bins: 8,
            keys: 4,
            stem_channels: 4,
            stage_channels: 4,
            mlp_width: 16,
            attention_hidden: 2,
            stem_cam_count: 1,
            stage_cam_count: 1,
            stage_cam_dilations: vec![1, 2],
            onset_stage_count: 1,
            ..Self::default()
        }
    }

    pub fn velocity_in_channels(&self) -> usize {
        self.stem_channels + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OvError::InvalidConfig(m));
        if self.onset_stage_count == 0 {
            return bad("onset_stage_count must be at least 1".into());
        }
        for (name, v) in [
            ("in_channels", self.in_channels),
            ("mel_bins", self.mel_bins),
            ("keys", self.keys),
            ("stem_channels", self.stem_channels),
            ("stage_channels", self.stage_channels),
            ("mlp_width", self.mlp_width),
            ("attention_hidden", self.attention_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, ch, dil) in [
            ("stem", self.stem_channels, &self.stem_cam_dilations),
            ("stage", self.stage_channels, &self.stage_cam_dilations),
        ] {
            if dil.is_empty() || dil.contains(&0) {
                return bad(format!("{name} CAM dilations must be nonempty and positive"));
            }
            if ch % dil.len() != 0 {
                return bad(format!(
                    "{name} channels {ch} not divisible by {} CAM branches",
                    dil.len()
                ));
            }
        }
        for (name, (kh, kw)) in [
            ("stem conv", self.stem_conv_kernel),
            ("stem CAM", self.stem_cam_kernel),
            ("stage CAM", self.stage_cam_kernel),
            ("collapse", (1, self.collapse_kernel_width)),
        ] {
            if kh % 2 == 0 || kw % 2 == 0 {
                return bad(format!("{name} kernel {kh}x{kw} must have odd sides"));
            }
        }
        if self.stage_cam_kernel.0 != 1 {
            return bad("stage CAM kernels must not span keys".into());
        }
        if !(self.leaky_slope >= 0.0) || !(self.bn_eps > 0.0) {
            return bad("leaky_slope must be >= 0 and bn_eps > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_valid() {
        ModelConfig::paper().validate().unwrap();
        ModelConfig::micro().validate().unwrap();
    }

    #[test]
    fn indivisible_channels_rejected() {
        let cfg = ModelConfig {
            stage_channels: 10,
            ..ModelConfig::paper()
        };
        assert!(matches!(cfg.validate(), Err(OvError::InvalidConfig(_))));
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let cfg = ModelConfig::micro();
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), cfg);
        let partial: ModelConfig = serde_json::from_str(r#"{"keys": 4}"#).unwrap();
        assert_eq!(partial.keys, 4);
        assert_eq!(partial.mel_bins, 229);
    }
}
