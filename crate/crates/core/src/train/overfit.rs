//! Desk-scale training check: full finite-difference gradient descent on a
//! tiny network and a synthetic batch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::gradcheck::{coordinate_derivative, learnable_coordinates};
use super::init::he_init_params;
use super::losses::{multitask_loss, LossBreakdown, LossWeights};
use crate::error::{OvError, Result};
use crate::model::{ModelConfig, OvNetwork, ParamMap, Tensor};

/// Step used for the finite-difference gradient.
const FD_STEP: f64 = super::gradcheck::DEFAULT_STEP;

/// Below two thousand parameters so a full gradient costs a few thousand
/// forward passes.
pub fn overfit_config() -> ModelConfig {
    ModelConfig {
        mel_bins: 8,
        keys: 4,
        stem_channels: 2,
        stage_channels: 2,
        mlp_width: 4,
        attention_hidden: 2,
        stem_cam_count: 1,
        stem_cam_dilations: vec![1, 2],
        stage_cam_count: 1,
        stage_cam_dilations: vec![1, 2],
        onset_stage_count: 1,
        ..ModelConfig::default()
    }
}

/// Features plus key-major `K × T` label grids.
#[derive(Debug, Clone)]
pub struct SyntheticBatch {
    pub input: Tensor<f64>,
    pub extended: Vec<f64>,
    pub onset_mask: Vec<f64>,
    pub velocity: Vec<f64>,
}

fn noise(cfg: &ModelConfig, frames: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 0.1).expect("valid std");
    let shape = [1, cfg.in_channels, cfg.mel_bins, frames];
    let data = (0..shape.iter().product()).map(|_| n.sample(&mut rng)).collect();
    Tensor::from_vec(shape, data).expect("sized")
}

impl SyntheticBatch {
    /// One note on key row `cfg.keys / 2` at frame `frames / 2` with full
    /// velocity, a bright spectral bump on that frame, and the usual
    /// two-frame label extension.
    pub fn single_onset(cfg: &ModelConfig, frames: usize, seed: u64) -> Result<Self> {
        if frames < 4 {
            return Err(OvError::InvalidConfig("synthetic batch needs at least 4 frames".into()));
        }
        let (k0, t0) = (cfg.keys / 2, frames / 2);
        let mut input = noise(cfg, frames, seed);
        let f = cfg.mel_bins;
        for c in 0..cfg.in_channels {
            let plane = input.plane_mut(0, c);
            for bin in f / 2..f {
                plane[bin * frames + t0] += if c == 0 { 2.0 } else { -2.0 };
            }
        }
        let mut extended = vec![0.0; cfg.keys * frames];
        let mut onset_mask = vec![0.0; cfg.keys * frames];
        let mut velocity = vec![0.0; cfg.keys * frames];
        for t in t0..(t0 + 3).min(frames) {
            extended[k0 * frames + t] = 1.0;
        }
        onset_mask[k0 * frames + t0] = 1.0;
        velocity[k0 * frames + t0] = 1.0;
        Ok(SyntheticBatch {
            input,
            extended,
            onset_mask,
            velocity,
        })
    }

    /// Every label is 0.5 and every frame is masked: nothing to learn beyond
    /// the constant optimum.
    pub fn zero_information(cfg: &ModelConfig, frames: usize, seed: u64) -> Self {
        let n = cfg.keys * frames;
        SyntheticBatch {
            input: noise(cfg, frames, seed),
            extended: vec![0.5; n],
            onset_mask: vec![1.0; n],
            velocity: vec![0.5; n],
        }
    }
}

/// Multitask loss of the network described by `params` on `batch`, with
/// every onset stage active.
pub fn batch_loss(
    cfg: &ModelConfig,
    params: &ParamMap<f64>,
    batch: &SyntheticBatch,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let net = OvNetwork::build(cfg, params)?;
    let out = net.forward(&batch.input, cfg.onset_stage_count)?;
    let stages: Vec<&[f64]> = out.onset_probs.iter().map(|t| t.data()).collect();
    multitask_loss(
        &batch.extended,
        &stages,
        &batch.onset_mask,
        &batch.velocity,
        out.velocity_probs.data(),
        w,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverfitReport {
    /// Loss before each step, then the final loss.
    pub trace: Vec<f64>,
    /// Running minimum of `trace`.
    pub best: Vec<f64>,
    pub diverged: bool,
}

impl OverfitReport {
    pub fn initial(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.trace.last().expect("nonempty trace")
    }

    pub fn ratio(&self) -> f64 {
        self.final_loss() / self.initial()
    }
}

/// Plain gradient descent with a full central-difference gradient per
/// step, from a He initialization drawn with `seed`. Stops early, flagging
/// divergence, once the loss exceeds ten times its initial value.
pub fn toy_overfit(
    cfg: &ModelConfig,
    batch: &SyntheticBatch,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<OverfitReport> {
    let w = LossWeights::default();
    let coords = learnable_coordinates(cfg);
    let mut params = he_init_params::<f64>(cfg, seed);
    let loss_of = |p: &ParamMap<f64>| batch_loss(cfg, p, batch, &w).map(|l| l.total);
    let mut trace = vec![loss_of(&params)?];
    let mut diverged = false;
    let mut grad = vec![0.0; coords.len()];
    for _ in 0..steps {
        for (i, c) in coords.iter().enumerate() {
            grad[i] = coordinate_derivative(&loss_of, &mut params, i, c, FD_STEP)?;
        }
        for (c, g) in coords.iter().zip(&grad) {
            params[c.name.as_str()].data[c.offset] -= lr * g;
        }
        let l = loss_of(&params)?;
        trace.push(l);
        if !l.is_finite() || l > 10.0 * trace[0] {
            diverged = true;
            break;
        }
    }
    let best = trace
        .iter()
        .scan(f64::INFINITY, |m, &v| {
            *m = m.min(v);
            Some(*m)
        })
        .collect();
    Ok(OverfitReport { trace, best, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::count_parameters;

    #[test]
    fn overfit_config_is_small() {
        let cfg = overfit_config();
        cfg.validate().unwrap();
        assert!(count_parameters(&cfg) < 2000);
    }

    #[test]
    fn short_run_decreases_loss() {
        let cfg = overfit_config();
        let batch = SyntheticBatch::single_onset(&cfg, 12, 1).unwrap();
        let r = toy_overfit(&cfg, &batch, 5, 0.05, 3).unwrap();
        assert!(!r.diverged);
        assert!(r.final_loss() < r.initial());
        assert!(r.best.windows(2).all(|w| w[1] <= w[0]));
    }
}
