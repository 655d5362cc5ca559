//! Layer-by-layer network oracle built from brute-force convolutions and
//! explicit normalization formulas.

use ov_core::model::{param_specs, ModelConfig, ParamKind, ParamMap, Tensor};
use ov_core::train::he_init_params;
use rand::Rng;

/// He weights plus random norm statistics, so folding is exercised.
pub fn random_params(cfg: &ModelConfig, seed: u64) -> ParamMap<f64> {
    let mut p: ParamMap<f64> = he_init_params(cfg, seed);
    let mut rng = super::rng(seed + 100);
    for s in param_specs(cfg) {
        let d = &mut p[s.name.as_str()].data;
        match s.kind {
            ParamKind::NormScale | ParamKind::RunningVar => d.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5)),
            ParamKind::NormShift | ParamKind::RunningMean | ParamKind::Bias => {
                d.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3))
            }
            ParamKind::AttentionBias => d.iter_mut().for_each(|v| *v = 1.0 + rng.random_range(-0.3..0.3)),
            ParamKind::Weight { .. } => {}
        }
    }
    p
}

fn t4(p: &ParamMap<f64>, name: &str) -> Tensor<f64> {
    p[name].to_tensor(name).unwrap()
}

fn v(p: &ParamMap<f64>, name: &str) -> Vec<f64> {
    p[name].data.clone()
}

/// `(x − mean)/sqrt(var + eps)·γ + β`, per channel or per `(channel, row)`.
fn norm(x: &Tensor<f64>, p: &ParamMap<f64>, name: &str, per_row: bool, eps: f64) -> Tensor<f64> {
    let [b, c, h, w] = x.shape();
    let (g, be, m, var) = (
        v(p, &format!("{name}.weight")),
        v(p, &format!("{name}.bias")),
        v(p, &format!("{name}.running_mean")),
        v(p, &format!("{name}.running_var")),
    );
    let mut y = x.clone();
    for n in 0..b {
        for ch in 0..c {
            for r in 0..h {
                let i = if per_row { ch * h + r } else { ch };
                for t in 0..w {
                    let val = x.at(n, ch, r, t);
                    y.plane_mut(n, ch)[r * w + t] = (val - m[i]) / (var[i] + eps).sqrt() * g[i] + be[i];
                }
            }
        }
    }
    y
}

fn lrelu(x: &Tensor<f64>, a: f64) -> Tensor<f64> {
    x.map(|v| if v >= 0.0 { v } else { a * v })
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn cam(x: &Tensor<f64>, p: &ParamMap<f64>, name: &str, dil: &[usize], kernel: (usize, usize)) -> Tensor<f64> {
    let [b, c, h, w] = x.shape();
    let mut branches = Vec::new();
    for (j, &d) in dil.iter().enumerate() {
        let br = format!("{name}.branch{j}");
        let pad = ((kernel.0 - 1) / 2, d * (kernel.1 - 1) / 2);
        branches.push(super::brute_conv2d(x, &t4(p, &format!("{br}.weight")), Some(&v(p, &format!("{br}.bias"))), (1, d), pad, 1));
    }
    let mut cat = branches[0].clone();
    for br in &branches[1..] {
        cat = cat.concat_channels(br).unwrap();
    }
    let (w1, b1, w2, b2) = (
        v(p, &format!("{name}.att.mlp1.weight")),
        v(p, &format!("{name}.att.mlp1.bias")),
        v(p, &format!("{name}.att.mlp2.weight")),
        v(p, &format!("{name}.att.mlp2.bias")),
    );
    let hidden = b1.len();
    let mut out = x.clone();
    for n in 0..b {
        let pooled: Vec<f64> = (0..c).map(|ch| x.plane(n, ch).iter().sum::<f64>() / (h * w) as f64).collect();
        let z: Vec<f64> = (0..hidden)
            .map(|i| (b1[i] + (0..c).map(|j| w1[i * c + j] * pooled[j]).sum::<f64>()).max(0.0))
            .collect();
        for ch in 0..c {
            let a = sigmoid(b2[ch] + (0..hidden).map(|i| w2[ch * hidden + i] * z[i]).sum::<f64>());
            for (o, &y) in out.plane_mut(n, ch).iter_mut().zip(cat.plane(n, ch)) {
                *o += a * y;
            }
        }
    }
    out
}

pub fn stem(x: &Tensor<f64>, p: &ParamMap<f64>, cfg: &ModelConfig) -> Tensor<f64> {
    let a = cfg.leaky_slope;
    let eps = cfg.bn_eps;
    let [b, _, f, t] = x.shape();
    let h = norm(x, p, "stem.sbn", true, eps);
    let (kh, kw) = cfg.stem_conv_kernel;
    let h = super::brute_conv2d(&h, &t4(p, "stem.conv.weight"), Some(&v(p, "stem.conv.bias")), (1, 1), ((kh - 1) / 2, (kw - 1) / 2), 1);
    let mut h = lrelu(&norm(&h, p, "stem.bn", false, eps), a);
    for i in 0..cfg.stem_cam_count {
        let name = format!("stem.cam{i}");
        h = cam(&h, p, &name, &cfg.stem_cam_dilations, cfg.stem_cam_kernel);
        h = lrelu(&norm(&h, p, &format!("{name}.bn"), false, eps), a);
    }
    let s = cfg.stem_channels;
    let flat = h.reshape([b, s * f, 1, t]).unwrap();
    let y = super::brute_conv2d(&flat, &t4(p, "stem.depthconv.weight"), Some(&v(p, "stem.depthconv.bias")), (1, 1), (0, 0), s);
    let y = y.reshape([b, s, cfg.keys, t]).unwrap();
    lrelu(&norm(&y, p, "stem.depthconv_bn", false, eps), a)
}

pub fn stage(x: &Tensor<f64>, p: &ParamMap<f64>, cfg: &ModelConfig, name: &str, cams: usize) -> Tensor<f64> {
    let a = cfg.leaky_slope;
    let eps = cfg.bn_eps;
    let [b, _, k, t] = x.shape();
    let c = |n: &str, x: &Tensor<f64>, pad: (usize, usize)| {
        super::brute_conv2d(x, &t4(p, &format!("{name}.{n}.weight")), Some(&v(p, &format!("{name}.{n}.bias"))), (1, 1), pad, 1)
    };
    let mut h = lrelu(&norm(&c("conv_in", x, (0, 0)), p, &format!("{name}.bn_in"), false, eps), a);
    for i in 0..cams {
        let cn = format!("{name}.cam{i}");
        h = cam(&h, p, &cn, &cfg.stage_cam_dilations, cfg.stage_cam_kernel);
        h = lrelu(&norm(&h, p, &format!("{cn}.bn"), false, eps), a);
    }
    let h = c("collapse", &h, (0, (cfg.collapse_kernel_width - 1) / 2));
    assert_eq!(h.height(), 1);
    let h = lrelu(&norm(&h, p, &format!("{name}.collapse_bn"), false, eps), a);
    let h = lrelu(&norm(&c("mlp", &h, (0, 0)), p, &format!("{name}.mlp_bn"), false, eps), a);
    let h = c("out", &h, (0, 0)).reshape([b, 1, k, t]).unwrap();
    norm(&h, p, &format!("{name}.sbn"), true, eps)
}

pub fn oracle_config() -> ModelConfig {
    ModelConfig {
        onset_stage_count: 2,
        ..ModelConfig::micro()
    }
}


/// Whole network: onset logits accumulate across stages, and the velocity
/// stage reads the stem output with the last onset probabilities appended.
/// Returns `(cumulative onset logits per stage, velocity probabilities)`.
pub fn forward(x: &Tensor<f64>, p: &ParamMap<f64>, cfg: &ModelConfig, stages: usize) -> (Vec<Tensor<f64>>, Tensor<f64>) {
    let s = stem(x, p, cfg);
    let mut logits: Vec<Tensor<f64>> = Vec::new();
    for i in 0..stages {
        let mut l = stage(&s, p, cfg, &format!("stage{i}"), cfg.stage_cam_count);
        if let Some(prev) = logits.last() {
            l.data_mut().iter_mut().zip(prev.data()).for_each(|(a, b)| *a += b);
        }
        logits.push(l);
    }
    let probs = logits.last().expect("at least one stage").map(sigmoid);
    let vin = s.concat_channels(&probs).unwrap();
    let vel = stage(&vin, p, cfg, "velocity", cfg.velocity_cam_count).map(sigmoid);
    (logits, vel)
}
