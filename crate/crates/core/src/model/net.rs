//! The onset/velocity network: CAM blocks, stem, onset stages, velocity
//! stage, and their multi-stage assembly.

use super::config::{ModelConfig, ResidualDomain};
use super::ops::{self, affine_act, conv2d, Activation, Affine, ConvSpec};
use super::tensor::{Real, Tensor};
use super::weights::{ModelWeights, ParamMap};
use crate::error::{OvError, Result};
use crate::roll::PianoRoll;

/// Clamp used when converting probabilities back to logits.
const PROB_EPS: f64 = 1e-7;

fn fetch<'a, T: Real>(p: &'a ParamMap<T>, name: &str) -> Result<&'a [T]> {
    p.get(name).map(|v| v.data.as_slice()).ok_or_else(|| OvError::Schema {
        missing: vec![name.to_string()],
        unexpected: vec![],
        misshaped: vec![],
    })
}

#[derive(Debug, Clone)]
pub struct Conv<T> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub spec: ConvSpec,
}

impl<T: Real> Conv<T> {
    fn load(p: &ParamMap<T>, name: &str, spec: ConvSpec) -> Result<Self> {
        let w = p
            .get(&format!("{name}.weight"))
            .ok_or_else(|| OvError::Schema {
                missing: vec![format!("{name}.weight")],
                unexpected: vec![],
                misshaped: vec![],
            })?
            .to_tensor(name)?;
        Ok(Conv {
            name: name.to_string(),
            weight: w,
            bias: fetch(p, &format!("{name}.bias"))?.to_vec(),
            spec,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.weight, Some(&self.bias), self.spec, &self.name)
    }
}

fn load_norm<T: Real>(p: &ParamMap<T>, name: &str, channels: usize, rows: usize, eps: f64) -> Result<Affine<T>> {
    Affine::from_batchnorm(
        channels,
        rows,
        fetch(p, &format!("{name}.weight"))?,
        fetch(p, &format!("{name}.bias"))?,
        fetch(p, &format!("{name}.running_mean"))?,
        fetch(p, &format!("{name}.running_var"))?,
        eps,
        name,
    )
}

/// Context aggregation block: residual + attention-scaled concatenation of
/// time-dilated convolutions.
#[derive(Debug, Clone)]
pub struct Cam<T> {
    pub name: String,
    pub branches: Vec<Conv<T>>,
    pub channels: usize,
    pub hidden: usize,
    pub mlp1_weight: Vec<T>,
    pub mlp1_bias: Vec<T>,
    pub mlp2_weight: Vec<T>,
    pub mlp2_bias: Vec<T>,
}

impl<T: Real> Cam<T> {
    fn load(
        p: &ParamMap<T>,
        name: &str,
        channels: usize,
        hidden: usize,
        dilations: &[usize],
        kernel: (usize, usize),
    ) -> Result<Self> {
        let branches = dilations
            .iter()
            .enumerate()
            .map(|(j, &d)| Conv::load(p, &format!("{name}.branch{j}"), ConvSpec::same(kernel, (1, d))))
            .collect::<Result<_>>()?;
        Ok(Cam {
            name: name.to_string(),
            branches,
            channels,
            hidden,
            mlp1_weight: fetch(p, &format!("{name}.att.mlp1.weight"))?.to_vec(),
            mlp1_bias: fetch(p, &format!("{name}.att.mlp1.bias"))?.to_vec(),
            mlp2_weight: fetch(p, &format!("{name}.att.mlp2.weight"))?.to_vec(),
            mlp2_bias: fetch(p, &format!("{name}.att.mlp2.bias"))?.to_vec(),
        })
    }

    /// Channel attention weights, `batch × channels`.
    pub fn attention(&self, x: &Tensor<T>) -> Vec<T> {
        let pooled = ops::global_avg_pool(x);
        let mut att = Vec::with_capacity(pooled.len());
        for item in pooled.chunks(self.channels) {
            let input: Vec<T> = item.iter().map(|&v| T::of(v)).collect();
            let mut h = ops::linear(&input, &self.mlp1_weight, &self.mlp1_bias);
            h.iter_mut().for_each(|v| *v = v.max(T::zero()));
            let logits = ops::linear(&h, &self.mlp2_weight, &self.mlp2_bias);
            att.extend(logits.into_iter().map(ops::sigmoid));
        }
        att
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [batch, c, _, _] = x.shape();
        if c != self.channels {
            return Err(OvError::shape(&self.name, format!("expected {} channels, got {c}", self.channels)));
        }
        let att = self.attention(x);
        let mut out = x.clone();
        let mut ch = 0;
        for br in &self.branches {
            let y = br.forward(x)?;
            for oc in 0..y.channels() {
                for b in 0..batch {
                    let a = att[b * c + ch + oc];
                    for (o, &v) in out.plane_mut(b, ch + oc).iter_mut().zip(y.plane(b, oc)) {
                        *o = *o + a * v;
                    }
                }
            }
            ch += y.channels();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Stem<T> {
    pub sbn: Affine<T>,
    pub conv: Conv<T>,
    pub bn: Affine<T>,
    pub cams: Vec<(Cam<T>, Affine<T>)>,
    pub depthconv: Conv<T>,
    pub depthconv_bn: Affine<T>,
    channels: usize,
    mel_bins: usize,
    keys: usize,
    slope: f64,
}

impl<T: Real> Stem<T> {
    fn load(p: &ParamMap<T>, cfg: &ModelConfig) -> Result<Self> {
        let s = cfg.stem_channels;
        let eps = cfg.bn_eps;
        let cams = (0..cfg.stem_cam_count)
            .map(|i| {
                let name = format!("stem.cam{i}");
                Ok((
                    Cam::load(p, &name, s, cfg.attention_hidden, &cfg.stem_cam_dilations, cfg.stem_cam_kernel)?,
                    load_norm(p, &format!("{name}.bn"), s, 1, eps)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Stem {
            sbn: load_norm(p, "stem.sbn", cfg.in_channels, cfg.mel_bins, eps)?,
            conv: Conv::load(p, "stem.conv", ConvSpec::same(cfg.stem_conv_kernel, (1, 1)))?,
            bn: load_norm(p, "stem.bn", s, 1, eps)?,
            cams,
            depthconv: Conv::load(
                p,
                "stem.depthconv",
                ConvSpec {
                    groups: s,
                    ..ConvSpec::plain()
                },
            )?,
            depthconv_bn: load_norm(p, "stem.depthconv_bn", s, 1, eps)?,
            channels: s,
            mel_bins: cfg.mel_bins,
            keys: cfg.keys,
            slope: cfg.leaky_slope,
        })
    }

    /// `B × in × F × T` features to `B × S × K × T`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [batch, _, f, t] = x.shape();
        if f != self.mel_bins {
            return Err(OvError::shape("stem", format!("input height {f}, expected {}", self.mel_bins)));
        }
        let act = Activation::LeakyRelu(self.slope);
        let mut h = x.clone();
        affine_act(&mut h, &self.sbn, Activation::Identity, "stem.sbn")?;
        let mut h = self.conv.forward(&h)?;
        affine_act(&mut h, &self.bn, act, "stem.bn")?;
        for (cam, bn) in &self.cams {
            h = cam.forward(&h)?;
            affine_act(&mut h, bn, act, &cam.name)?;
        }
        // S groups of F rows become S groups of K rows.
        let h = h.reshape([batch, self.channels * f, 1, t])?;
        let h = self.depthconv.forward(&h)?;
        let mut h = h.reshape([batch, self.channels, self.keys, t])?;
        affine_act(&mut h, &self.depthconv_bn, act, "stem.depthconv_bn")?;
        Ok(h)
    }
}

/// Onset or velocity stage; returns pre-sigmoid logits `B × 1 × K × T`.
#[derive(Debug, Clone)]
pub struct Stage<T> {
    pub name: String,
    pub conv_in: Conv<T>,
    pub bn_in: Affine<T>,
    pub cams: Vec<(Cam<T>, Affine<T>)>,
    pub collapse: Conv<T>,
    pub collapse_bn: Affine<T>,
    pub mlp: Conv<T>,
    pub mlp_bn: Affine<T>,
    pub out: Conv<T>,
    pub sbn: Affine<T>,
    in_channels: usize,
    keys: usize,
    slope: f64,
}

impl<T: Real> Stage<T> {
    fn load(p: &ParamMap<T>, cfg: &ModelConfig, name: &str, in_channels: usize, cams: usize) -> Result<Self> {
        let c = cfg.stage_channels;
        let m = cfg.mlp_width;
        let eps = cfg.bn_eps;
        let cams = (0..cams)
            .map(|i| {
                let cam = format!("{name}.cam{i}");
                Ok((
                    Cam::load(p, &cam, c, cfg.attention_hidden, &cfg.stage_cam_dilations, cfg.stage_cam_kernel)?,
                    load_norm(p, &format!("{cam}.bn"), c, 1, eps)?,
                ))
            })
            .collect::<Result<_>>()?;
        let collapse_spec = ConvSpec {
            dilation: (1, 1),
            padding: (0, (cfg.collapse_kernel_width - 1) / 2),
            groups: 1,
        };
        Ok(Stage {
            name: name.to_string(),
            conv_in: Conv::load(p, &format!("{name}.conv_in"), ConvSpec::plain())?,
            bn_in: load_norm(p, &format!("{name}.bn_in"), c, 1, eps)?,
            cams,
            collapse: Conv::load(p, &format!("{name}.collapse"), collapse_spec)?,
            collapse_bn: load_norm(p, &format!("{name}.collapse_bn"), m, 1, eps)?,
            mlp: Conv::load(p, &format!("{name}.mlp"), ConvSpec::plain())?,
            mlp_bn: load_norm(p, &format!("{name}.mlp_bn"), m, 1, eps)?,
            out: Conv::load(p, &format!("{name}.out"), ConvSpec::plain())?,
            sbn: load_norm(p, &format!("{name}.sbn"), 1, cfg.keys, eps)?,
            in_channels,
            keys: cfg.keys,
            slope: cfg.leaky_slope,
        })
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [batch, c, k, t] = x.shape();
        if c != self.in_channels || k != self.keys {
            return Err(OvError::shape(
                &self.name,
                format!("input {c}x{k}, expected {}x{}", self.in_channels, self.keys),
            ));
        }
        let act = Activation::LeakyRelu(self.slope);
        let mut h = self.conv_in.forward(x)?;
        affine_act(&mut h, &self.bn_in, act, &self.conv_in.name)?;
        for (cam, bn) in &self.cams {
            h = cam.forward(&h)?;
            affine_act(&mut h, bn, act, &cam.name)?;
        }
        let mut h = self.collapse.forward(&h)?;
        affine_act(&mut h, &self.collapse_bn, act, &self.collapse.name)?;
        // dropout: identity at inference
        let mut h = self.mlp.forward(&h)?;
        affine_act(&mut h, &self.mlp_bn, act, &self.mlp.name)?;
        let h = self.out.forward(&h)?;
        let mut h = h.reshape([batch, 1, self.keys, t])?;
        affine_act(&mut h, &self.sbn, Activation::Identity, &self.out.name)?;
        Ok(h)
    }

    pub fn probabilities(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = self.logits(x)?;
        ops::sigmoid_inplace(&mut y);
        Ok(y)
    }
}

/// Per-stage onset rolls and the velocity roll, each `B × 1 × K × T`.
#[derive(Debug, Clone)]
pub struct NetworkOutput<T = f32> {
    /// Accumulated logits after each evaluated onset stage.
    pub onset_logits: Vec<Tensor<T>>,
    pub onset_probs: Vec<Tensor<T>>,
    pub velocity_probs: Tensor<T>,
}

fn tensor_roll<T: Real>(t: &Tensor<T>, b: usize, frame_period_s: f64) -> PianoRoll {
    let [_, _, k, w] = t.shape();
    let values = t.item(b).iter().map(|v| v.f64() as f32).collect();
    PianoRoll::from_values(k, w, frame_period_s, values).expect("sized by tensor")
}

impl<T: Real> NetworkOutput<T> {
    pub fn stages(&self) -> usize {
        self.onset_probs.len()
    }

    pub fn onset_roll(&self, stage: usize, b: usize, frame_period_s: f64) -> PianoRoll {
        tensor_roll(&self.onset_probs[stage], b, frame_period_s)
    }

    /// Onset roll of the last evaluated stage.
    pub fn final_onset_roll(&self, b: usize, frame_period_s: f64) -> PianoRoll {
        self.onset_roll(self.stages() - 1, b, frame_period_s)
    }

    pub fn velocity_roll(&self, b: usize, frame_period_s: f64) -> PianoRoll {
        tensor_roll(&self.velocity_probs, b, frame_period_s)
    }
}

/// A network ready for inference in scalar type `T`.
#[derive(Debug, Clone)]
pub struct OvNetwork<T = f32> {
    config: ModelConfig,
    pub stem: Stem<T>,
    pub onset_stages: Vec<Stage<T>>,
    pub velocity: Stage<T>,
}

impl OvNetwork<f32> {
    pub fn from_weights(w: &ModelWeights) -> Result<Self> {
        Self::build(w.config(), w.params())
    }
}

impl<T: Real> OvNetwork<T> {
    pub fn build(cfg: &ModelConfig, p: &ParamMap<T>) -> Result<Self> {
        cfg.validate()?;
        let onset_stages = (0..cfg.onset_stage_count)
            .map(|s| Stage::load(p, cfg, &format!("stage{s}"), cfg.stem_channels, cfg.stage_cam_count))
            .collect::<Result<_>>()?;
        Ok(OvNetwork {
            config: cfg.clone(),
            stem: Stem::load(p, cfg)?,
            onset_stages,
            velocity: Stage::load(p, cfg, "velocity", cfg.velocity_in_channels(), cfg.velocity_cam_count)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Runs the stem, the first `active_stages` onset stages, and the
    /// velocity stage on `B × in × F × T` features.
    pub fn forward(&self, x: &Tensor<T>, active_stages: usize) -> Result<NetworkOutput<T>> {
        if active_stages == 0 || active_stages > self.onset_stages.len() {
            return Err(OvError::InvalidConfig(format!(
                "requested {active_stages} onset stages, network has {}",
                self.onset_stages.len()
            )));
        }
        let stem = self.stem.forward(x)?;
        let mut onset_logits: Vec<Tensor<T>> = Vec::with_capacity(active_stages);
        let mut onset_probs: Vec<Tensor<T>> = Vec::with_capacity(active_stages);
        for stage in &self.onset_stages[..active_stages] {
            let l = stage.logits(&stem)?;
            match self.config.residual_domain {
                ResidualDomain::Logit => {
                    let acc = match onset_logits.last() {
                        None => l,
                        Some(prev) => {
                            let mut acc = prev.clone();
                            acc.data_mut().iter_mut().zip(l.data()).for_each(|(a, &b)| *a = *a + b);
                            acc
                        }
                    };
                    onset_probs.push(acc.map(ops::sigmoid));
                    onset_logits.push(acc);
                }
                ResidualDomain::Probability => {
                    let mut p = l.map(ops::sigmoid);
                    if let Some(prev) = onset_probs.last() {
                        p.data_mut()
                            .iter_mut()
                            .zip(prev.data())
                            .for_each(|(a, &b)| *a = (*a + b).min(T::one()));
                    }
                    let eps = T::of(PROB_EPS);
                    onset_logits.push(p.map(|v| {
                        let v = v.max(eps).min(T::one() - eps);
                        (v / (T::one() - v)).ln()
                    }));
                    onset_probs.push(p);
                }
            }
        }
        let last = onset_probs.last().expect("at least one stage");
        let vel_in = stem.concat_channels(last)?;
        let velocity_probs = self.velocity.probabilities(&vel_in)?;
        Ok(NetworkOutput {
            onset_logits,
            onset_probs,
            velocity_probs,
        })
    }
}

/// Convenience wrapper over [`OvNetwork::forward`] for stored weights.
pub fn ov_forward(x: &Tensor<f32>, weights: &ModelWeights, active_stages: usize) -> Result<NetworkOutput<f32>> {
    OvNetwork::from_weights(weights)?.forward(x, active_stages)
}
