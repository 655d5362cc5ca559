//! Temporal receptive field: analytic sum over layers, and an empirical
//! perturbation probe on random weights.

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::OvNetwork;
use super::schema::param_specs;
use super::tensor::Tensor;
use super::weights::ParamMap;
use crate::error::Result;
use crate::train::init::he_init_params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Stem,
    StageOnset,
    StageVelocity,
    Full,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Stem,
        Component::StageOnset,
        Component::StageVelocity,
        Component::Full,
    ];
}

/// Frames each temporal layer adds on each side, summed: `Σ dilation·(kw−1)`.
fn stem_growth(cfg: &ModelConfig) -> usize {
    let max_d = cfg.stem_cam_dilations.iter().copied().max().unwrap_or(1);
    (cfg.stem_conv_kernel.1 - 1) + cfg.stem_cam_count * max_d * (cfg.stem_cam_kernel.1 - 1)
}

fn stage_growth(cfg: &ModelConfig, cams: usize) -> usize {
    let max_d = cfg.stage_cam_dilations.iter().copied().max().unwrap_or(1);
    cams * max_d * (cfg.stage_cam_kernel.1 - 1) + (cfg.collapse_kernel_width - 1)
}

/// Receptive field in frames, `1 + Σ dilation·(kernel_width − 1)` along the
/// longest path. CAM attention is a global average and is not counted.
pub fn receptive_field(cfg: &ModelConfig, component: Component) -> usize {
    1 + match component {
        Component::Stem => stem_growth(cfg),
        Component::StageOnset => stage_growth(cfg, cfg.stage_cam_count),
        Component::StageVelocity => stage_growth(cfg, cfg.velocity_cam_count),
        // Onset stages read the stem in parallel; the velocity stage reads
        // the last onset roll, so the longest path is stem → stage → velocity.
        Component::Full => {
            stem_growth(cfg) + stage_growth(cfg, cfg.stage_cam_count) + stage_growth(cfg, cfg.velocity_cam_count)
        }
    }
}

/// Random weights with every attention MLP weight zeroed, so attention is a
/// constant and only the convolutions carry temporal context.
pub fn probe_params(cfg: &ModelConfig, seed: u64) -> ParamMap<f64> {
    let mut p: ParamMap<f64> = he_init_params(cfg, seed);
    for s in param_specs(cfg) {
        if s.name.contains(".att.mlp") && s.name.ends_with(".weight") {
            p[&s.name].data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    p
}

/// Measures the span of output frames that change when one input frame is
/// perturbed.
pub fn empirical_receptive_field(cfg: &ModelConfig, component: Component, seed: u64) -> Result<usize> {
    let net = OvNetwork::<f64>::build(cfg, &probe_params(cfg, seed))?;
    let frames = 2 * receptive_field(cfg, component) + 9;
    let center = frames / 2;
    let channels = match component {
        Component::Stem | Component::Full => cfg.in_channels,
        Component::StageOnset => cfg.stem_channels,
        Component::StageVelocity => cfg.velocity_in_channels(),
    };
    let rows = match component {
        Component::Stem | Component::Full => cfg.mel_bins,
        _ => cfg.keys,
    };
    let mut rng_state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let mut next = || {
        // xorshift64*: deterministic input noise, independent of the weight RNG
        rng_state ^= rng_state >> 12;
        rng_state ^= rng_state << 25;
        rng_state ^= rng_state >> 27;
        (rng_state.wrapping_mul(0x2545_f491_4f6c_dd1d) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let base = Tensor::from_vec(
        [1, channels, rows, frames],
        (0..channels * rows * frames).map(|_| next()).collect(),
    )?;
    let mut bumped = base.clone();
    for c in 0..channels {
        for r in 0..rows {
            bumped.plane_mut(0, c)[r * frames + center] += 1.0;
        }
    }

    let run = |x: &Tensor<f64>| -> Result<Tensor<f64>> {
        match component {
            Component::Stem => net.stem.forward(x),
            Component::StageOnset => net.onset_stages[0].logits(x),
            Component::StageVelocity => net.velocity.logits(x),
            Component::Full => {
                let stages = cfg.onset_stage_count;
                let out = net.forward(x, stages)?;
                // compare pre-sigmoid values to avoid saturation
                Ok(out.velocity_probs.map(|p| (p / (1.0 - p)).ln()))
            }
        }
    };
    let (a, b) = (run(&base)?, run(&bumped)?);
    let w = a.width();
    let changed: Vec<usize> = (0..w)
        .filter(|&t| {
            a.data()
                .chunks_exact(w)
                .zip(b.data().chunks_exact(w))
                .any(|(ra, rb)| ra[t] != rb[t])
        })
        .collect();
    Ok(match (changed.first(), changed.last()) {
        (Some(&lo), Some(&hi)) => hi - lo + 1,
        _ => 0,
    })
}
