//! Inference kernels: convolution, (sub-spectral) batch norm, activations,
//! pooling.
//!
//! Every output element is reduced in a fixed order by exactly one task, so
//! results do not depend on the rayon thread count.

use rayon::prelude::*;

use super::tensor::{Real, Tensor};
use crate::error::{OvError, Result};

/// Output columns processed per tile.
const TILE: usize = 256;
/// Below this many multiply-adds per tile a layer runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub dilation: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl ConvSpec {
    pub const fn plain() -> Self {
        ConvSpec {
            dilation: (1, 1),
            padding: (0, 0),
            groups: 1,
        }
    }

    /// Padding that preserves spatial shape for an odd kernel.
    pub const fn same(kernel: (usize, usize), dilation: (usize, usize)) -> Self {
        ConvSpec {
            dilation,
            padding: (dilation.0 * (kernel.0 - 1) / 2, dilation.1 * (kernel.1 - 1) / 2),
            groups: 1,
        }
    }
}

fn out_dim(input: usize, pad: usize, dil: usize, k: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(dil * (k - 1)).filter(|&d| d > 0)
}

/// 2-D cross-correlation with zero padding, stride 1.
///
/// `weight` is `out_channels × (in_channels / groups) × kh × kw`.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&[T]>,
    spec: ConvSpec,
    layer: &str,
) -> Result<Tensor<T>> {
    let [batch, cin, h, w] = x.shape();
    let [cout, cin_g, kh, kw] = weight.shape();
    let g = spec.groups;
    if g == 0 || cin % g != 0 || cout % g != 0 {
        return Err(OvError::shape(layer, format!("groups {g} do not divide channels {cin}->{cout}")));
    }
    if cin / g != cin_g {
        return Err(OvError::shape(
            layer,
            format!("input has {cin} channels, kernel expects {} ({cin_g} per group)", cin_g * g),
        ));
    }
    if kh == 0 || kw == 0 {
        return Err(OvError::shape(layer, "empty kernel"));
    }
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(OvError::shape(layer, format!("{} biases for {cout} outputs", b.len())));
        }
    }
    let (dh, dw) = spec.dilation;
    let (ph, pw) = spec.padding;
    let ho = out_dim(h, ph, dh, kh).ok_or_else(|| OvError::shape(layer, format!("kernel height {kh} too large for {h}")))?;
    let wo = out_dim(w, pw, dw, kw).ok_or_else(|| OvError::shape(layer, format!("kernel width {kw} too large for {w}")))?;
    let cout_g = cout / g;
    let wdata = weight.data();

    let mut out = Tensor::zeros([batch, cout, ho, wo]);
    let tile_macs = ho * TILE.min(wo) * cin_g * kh * kw;
    let mut tile_buf: Vec<T> = Vec::new();

    for b in 0..batch {
        for t0 in (0..wo).step_by(TILE) {
            let t1 = (t0 + TILE).min(wo);
            let tw = t1 - t0;
            tile_buf.clear();
            tile_buf.resize(cout * ho * tw, T::zero());

            let compute = |oc: usize, obuf: &mut [T]| {
                let grp = oc / cout_g;
                if let Some(bv) = bias {
                    obuf.iter_mut().for_each(|v| *v = bv[oc]);
                }
                for icg in 0..cin_g {
                    let iplane = x.plane(b, grp * cin_g + icg);
                    for i in 0..kh {
                        for oh in 0..ho {
                            let ih = (oh + i * dh) as isize - ph as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let irow = &iplane[ih as usize * w..(ih as usize + 1) * w];
                            let orow = &mut obuf[oh * tw..(oh + 1) * tw];
                            for j in 0..kw {
                                let wv = wdata[((oc * cin_g + icg) * kh + i) * kw + j];
                                // ow in [lo, hi) maps to iw = ow + off within [0, w)
                                let off = (j * dw) as isize - pw as isize;
                                let lo = (t0 as isize).max(-off) as usize;
                                let hi = (t1 as isize).min(w as isize - off);
                                if hi <= lo as isize {
                                    continue;
                                }
                                let hi = hi as usize;
                                let src = &irow[(lo as isize + off) as usize..(hi as isize + off) as usize];
                                let dst = &mut orow[lo - t0..hi - t0];
                                for (o, &v) in dst.iter_mut().zip(src) {
                                    *o = *o + wv * v;
                                }
                            }
                        }
                    }
                }
            };

            if tile_macs * cout >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
                tile_buf
                    .par_chunks_mut(ho * tw)
                    .enumerate()
                    .for_each(|(oc, obuf)| compute(oc, obuf));
            } else {
                tile_buf
                    .chunks_mut(ho * tw)
                    .enumerate()
                    .for_each(|(oc, obuf)| compute(oc, obuf));
            }

            for oc in 0..cout {
                let plane = out.plane_mut(b, oc);
                for oh in 0..ho {
                    plane[oh * wo + t0..oh * wo + t1]
                        .copy_from_slice(&tile_buf[(oc * ho + oh) * tw..(oc * ho + oh + 1) * tw]);
                }
            }
        }
    }
    Ok(out)
}

/// Inference-time normalization folded into a scale and shift.
///
/// With `rows == 1` the affine is per channel (plain BN); otherwise one pair
/// per `(channel, row)` (sub-spectral BN).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub channels: usize,
    pub rows: usize,
    pub scale: Vec<T>,
    pub shift: Vec<T>,
}

impl<T: Real> Affine<T> {
    pub fn identity(channels: usize, rows: usize) -> Self {
        Affine {
            channels,
            rows,
            scale: vec![T::one(); channels * rows],
            shift: vec![T::zero(); channels * rows],
        }
    }

    /// Folds `(x - mean) / sqrt(var + eps) * gamma + beta`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_batchnorm(
        channels: usize,
        rows: usize,
        gamma: &[T],
        beta: &[T],
        mean: &[T],
        var: &[T],
        eps: f64,
        layer: &str,
    ) -> Result<Self> {
        let n = channels * rows;
        if [gamma.len(), beta.len(), mean.len(), var.len()].iter().any(|&l| l != n) {
            return Err(OvError::shape(layer, format!("norm parameters must have {n} entries")));
        }
        if let Some(i) = var.iter().position(|v| !(*v > T::zero())) {
            return Err(OvError::CorruptWeights(format!(
                "{layer}: running variance {:?} at index {i} is not positive",
                var[i]
            )));
        }
        let mut scale = Vec::with_capacity(n);
        let mut shift = Vec::with_capacity(n);
        for i in 0..n {
            let s = gamma[i] / (var[i] + T::of(eps)).sqrt();
            scale.push(s);
            shift.push(beta[i] - mean[i] * s);
        }
        Ok(Affine {
            channels,
            rows,
            scale,
            shift,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
}

/// Applies `affine` then `act` in place.
pub fn affine_act<T: Real>(x: &mut Tensor<T>, affine: &Affine<T>, act: Activation, layer: &str) -> Result<()> {
    let [batch, c, h, w] = x.shape();
    if affine.channels != c || (affine.rows != 1 && affine.rows != h) {
        return Err(OvError::shape(
            layer,
            format!("norm for {}x{} applied to {c} channels x {h} rows", affine.channels, affine.rows),
        ));
    }
    let slope = match act {
        Activation::LeakyRelu(s) => Some(T::of(s)),
        Activation::Identity => None,
    };
    for b in 0..batch {
        for ch in 0..c {
            let plane = x.plane_mut(b, ch);
            for (r, row) in plane.chunks_mut(w.max(1)).enumerate() {
                let idx = if affine.rows == 1 { ch } else { ch * affine.rows + r };
                let (s, t) = (affine.scale[idx], affine.shift[idx]);
                match slope {
                    Some(a) => row.iter_mut().for_each(|v| {
                        let y = *v * s + t;
                        *v = if y >= T::zero() { y } else { y * a };
                    }),
                    None => row.iter_mut().for_each(|v| *v = *v * s + t),
                }
            }
        }
    }
    Ok(())
}

pub fn batchnorm<T: Real>(x: &Tensor<T>, affine: &Affine<T>) -> Result<Tensor<T>> {
    let mut y = x.clone();
    affine_act(&mut y, affine, Activation::Identity, "batchnorm")?;
    Ok(y)
}

pub fn leaky_relu_inplace<T: Real>(x: &mut Tensor<T>, slope: f64) {
    let a = T::of(slope);
    x.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = *v * a;
        }
    });
}

pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn sigmoid_inplace<T: Real>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
}

/// Mean over `height × width` per `(batch, channel)`, accumulated in f64.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Vec<f64> {
    let [batch, c, h, w] = x.shape();
    let n = (h * w) as f64;
    let mut out = Vec::with_capacity(batch * c);
    for b in 0..batch {
        for ch in 0..c {
            let s: f64 = x.plane(b, ch).iter().map(|v| v.f64()).sum();
            out.push(s / n);
        }
    }
    out
}

/// `y = W x + b` with `W` stored row-major `out × in`.
pub fn linear<T: Real>(input: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            weight[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(input)
                .fold(b, |acc, (&wv, &xv)| acc + wv * xv)
        })
        .collect()
}
