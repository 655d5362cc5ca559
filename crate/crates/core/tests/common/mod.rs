//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod net;

use std::f64::consts::PI;

use ov_core::model::Tensor;
use ov_core::roll::{NoteEvent, Score};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Seven nested loops, zero padding outside the input.
pub fn brute_conv2d(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    bias: Option<&[f64]>,
    dil: (usize, usize),
    pad: (usize, usize),
    groups: usize,
) -> Tensor<f64> {
    let [b, cin, h, wd] = x.shape();
    let [cout, cin_g, kh, kw] = w.shape();
    let oh = h + 2 * pad.0 - dil.0 * (kh - 1);
    let ow = wd + 2 * pad.1 - dil.1 * (kw - 1);
    let cout_g = cout / groups;
    let mut out = Tensor::zeros([b, cout, oh, ow]);
    for n in 0..b {
        for o in 0..cout {
            let g = o / cout_g;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias.map_or(0.0, |bb| bb[o]);
                    for ci in 0..cin_g {
                        let c = g * cin_g + ci;
                        assert!(c < cin);
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (y + i * dil.0) as i64 - pad.0 as i64;
                                let ix = (xx + j * dil.1) as i64 - pad.1 as i64;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += w.at(o, ci, i, j) * x.at(n, c, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    out.plane_mut(n, o)[y * ow + xx] = acc;
                }
            }
        }
    }
    out
}

fn htk_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn htk_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangles with unit peaks at mel-spaced centers, evaluated on FFT bins.
pub fn explicit_filterbank(n_fft: usize, n_mels: usize, fmin: f64, fmax: f64, sr: f64) -> Vec<Vec<f64>> {
    let lo = htk_mel(fmin);
    let hi = htk_mel(fmax);
    let pts: Vec<f64> = (0..n_mels + 2)
        .map(|i| htk_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|m| {
            (0..=n_fft / 2)
                .map(|k| {
                    let f = k as f64 * sr / n_fft as f64;
                    if f <= pts[m] || f >= pts[m + 2] {
                        0.0
                    } else if f <= pts[m + 1] {
                        (f - pts[m]) / (pts[m + 1] - pts[m])
                    } else {
                        (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1])
                    }
                })
                .collect()
        })
        .collect()
}

/// Log-mel by direct O(n²) DFT of each reflect-padded, Hann-windowed frame.
/// Returns `bins × frames`, row-major.
pub fn naive_logmel(samples: &[f32], n_fft: usize, hop: usize, fb: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len() as i64;
    let frames = samples.len() / hop + 1;
    let half = (n_fft / 2) as i64;
    let idx = |i: i64| -> usize {
        // single reflection suffices when the signal is longer than half a window
        let r = if i < 0 {
            -i
        } else if i >= n {
            2 * (n - 1) - i
        } else {
            i
        };
        r as usize
    };
    let win: Vec<f64> = (0..n_fft).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n_fft as f64).cos())).collect();
    let cos_sin: Vec<(f64, f64)> = (0..n_fft)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n_fft as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let mut out = vec![0.0; fb.len() * frames];
    for t in 0..frames {
        let start = (t * hop) as i64 - half;
        let frame: Vec<f64> = (0..n_fft)
            .map(|i| f64::from(samples[idx(start + i as i64)]) * win[i])
            .collect();
        let power: Vec<f64> = (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in frame.iter().enumerate() {
                    let (c, s) = cos_sin[(k * i) % n_fft];
                    re += v * c;
                    im -= v * s;
                }
                re * re + im * im
            })
            .collect();
        for (m, filt) in fb.iter().enumerate() {
            let e: f64 = filt.iter().zip(&power).map(|(a, b)| a * b).sum();
            out[m * frames + t] = e.max(1e-10).ln();
        }
    }
    out
}

/// Size of a maximum matching by exhaustive search over assignments.
pub fn brute_max_matching(adj: &[Vec<usize>], n_right: usize) -> usize {
    fn go(i: usize, adj: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
        if i == adj.len() {
            return 0;
        }
        let mut best = go(i + 1, adj, used);
        for &j in &adj[i] {
            if !used[j] {
                used[j] = true;
                best = best.max(1 + go(i + 1, adj, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, adj, &mut vec![false; n_right])
}

/// Random score on a few keys so candidate pairs are common.
pub fn random_dense_score(rng: &mut ChaCha8Rng, n: usize, keys: u8, span_s: f64) -> Score {
    let events = (0..n)
        .map(|_| NoteEvent {
            key: rng.random_range(1..=keys) + 39,
            velocity: rng.random_range(0.0f32..=1.0),
            onset_s: (rng.random_range(0.0..span_s) * 1000.0).round() / 1000.0,
            offset_s: None,
        })
        .collect();
    Score::new(events, span_s)
}
