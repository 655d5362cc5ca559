//! Parameter naming and shapes for a [`ModelConfig`].
//!
//! Names follow `<block>.<layer>.<field>`:
//!
//! | prefix                       | layer                                   |
//! |------------------------------|-----------------------------------------|
//! | `stem.sbn`                   | input sub-spectral BN, `[in, F]`        |
//! | `stem.conv`                  | 3×3 input convolution                   |
//! | `stem.bn`                    | BN after the input convolution          |
//! | `stem.cam{i}.branch{j}`      | dilated convolution `j` of CAM `i`      |
//! | `stem.cam{i}.att.mlp{1,2}`   | attention MLP of CAM `i`                |
//! | `stem.cam{i}.bn`             | BN after CAM `i`                        |
//! | `stem.depthconv`             | grouped F→K frame-wise projection       |
//! | `stem.depthconv_bn`          | BN after the projection                 |
//! | `stage{s}.conv_in` / `bn_in` | 1×1 input convolution and its BN        |
//! | `stage{s}.cam{i}.…`          | as in the stem                          |
//! | `stage{s}.collapse` / `_bn`  | K×3 convolution collapsing the key axis |
//! | `stage{s}.mlp` / `mlp_bn`    | 1×1 hidden layer                        |
//! | `stage{s}.out`               | 1×1 projection to K                     |
//! | `stage{s}.sbn`               | output sub-spectral BN, `[1, K]`        |
//! | `velocity.…`                 | same layout as an onset stage           |
//!
//! Convolutions carry `weight` and `bias`; norms carry `weight` (gamma),
//! `bias` (beta), `running_mean` and `running_var`. The dropout layers
//! `stage{s}.dropout{0,1}` hold no tensors.

use super::config::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution or linear weight; `fan_in` drives He initialization.
    Weight { fan_in: usize },
    Bias,
    /// Bias feeding the attention sigmoid.
    AttentionBias,
    NormScale,
    NormShift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn learnable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

struct Builder(Vec<ParamSpec>);

impl Builder {
    fn push(&mut self, name: String, dims: Vec<usize>, kind: ParamKind) {
        self.0.push(ParamSpec { name, dims, kind });
    }

    fn conv(&mut self, name: &str, cout: usize, cin: usize, kh: usize, kw: usize) {
        self.push(
            format!("{name}.weight"),
            vec![cout, cin, kh, kw],
            ParamKind::Weight { fan_in: cin * kh * kw },
        );
        self.push(format!("{name}.bias"), vec![cout], ParamKind::Bias);
    }

    fn norm(&mut self, name: &str, dims: Vec<usize>) {
        self.push(format!("{name}.weight"), dims.clone(), ParamKind::NormScale);
        self.push(format!("{name}.bias"), dims.clone(), ParamKind::NormShift);
        self.push(format!("{name}.running_mean"), dims.clone(), ParamKind::RunningMean);
        self.push(format!("{name}.running_var"), dims, ParamKind::RunningVar);
    }

    fn cam(&mut self, name: &str, channels: usize, hidden: usize, dilations: &[usize], kernel: (usize, usize)) {
        let per = channels / dilations.len();
        for j in 0..dilations.len() {
            self.conv(&format!("{name}.branch{j}"), per, channels, kernel.0, kernel.1);
        }
        self.push(
            format!("{name}.att.mlp1.weight"),
            vec![hidden, channels],
            ParamKind::Weight { fan_in: channels },
        );
        self.push(format!("{name}.att.mlp1.bias"), vec![hidden], ParamKind::Bias);
        self.push(
            format!("{name}.att.mlp2.weight"),
            vec![channels, hidden],
            ParamKind::Weight { fan_in: hidden },
        );
        self.push(format!("{name}.att.mlp2.bias"), vec![channels], ParamKind::AttentionBias);
    }

    fn stage(&mut self, name: &str, cfg: &ModelConfig, in_channels: usize, cams: usize) {
        let c = cfg.stage_channels;
        let m = cfg.mlp_width;
        self.conv(&format!("{name}.conv_in"), c, in_channels, 1, 1);
        self.norm(&format!("{name}.bn_in"), vec![c]);
        for i in 0..cams {
            let cam = format!("{name}.cam{i}");
            self.cam(&cam, c, cfg.attention_hidden, &cfg.stage_cam_dilations, cfg.stage_cam_kernel);
            self.norm(&format!("{cam}.bn"), vec![c]);
        }
        self.conv(&format!("{name}.collapse"), m, c, cfg.keys, cfg.collapse_kernel_width);
        self.norm(&format!("{name}.collapse_bn"), vec![m]);
        self.conv(&format!("{name}.mlp"), m, m, 1, 1);
        self.norm(&format!("{name}.mlp_bn"), vec![m]);
        self.conv(&format!("{name}.out"), cfg.keys, m, 1, 1);
        self.norm(&format!("{name}.sbn"), vec![1, cfg.keys]);
    }
}

/// Every stored tensor, in canonical file order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut b = Builder(Vec::new());
    let s = cfg.stem_channels;
    b.norm("stem.sbn", vec![cfg.in_channels, cfg.mel_bins]);
    let (kh, kw) = cfg.stem_conv_kernel;
    b.conv("stem.conv", s, cfg.in_channels, kh, kw);
    b.norm("stem.bn", vec![s]);
    for i in 0..cfg.stem_cam_count {
        let cam = format!("stem.cam{i}");
        b.cam(&cam, s, cfg.attention_hidden, &cfg.stem_cam_dilations, cfg.stem_cam_kernel);
        b.norm(&format!("{cam}.bn"), vec![s]);
    }
    b.conv("stem.depthconv", s * cfg.keys, cfg.mel_bins, 1, 1);
    b.norm("stem.depthconv_bn", vec![s]);
    for st in 0..cfg.onset_stage_count {
        b.stage(&format!("stage{st}"), cfg, s, cfg.stage_cam_count);
    }
    b.stage("velocity", cfg, cfg.velocity_in_channels(), cfg.velocity_cam_count);
    b.0
}

/// Number of learnable scalars (running statistics excluded).
pub fn count_parameters(cfg: &ModelConfig) -> usize {
    param_specs(cfg)
        .iter()
        .filter(|p| p.kind.learnable())
        .map(ParamSpec::numel)
        .sum()
}
