//! HTK-scale triangular mel filterbank.

use crate::error::{OvError, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Dense `n_mels × (n_fft/2 + 1)` filter matrix with a sparse view for projection.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
    /// Per filter: first bin with nonzero weight and the nonzero run.
    spans: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn new(n_fft: usize, n_mels: usize, fmin: f64, fmax: f64, sample_rate: f64) -> Result<Self> {
        if n_mels < 2 {
            return Err(OvError::InvalidConfig(format!("need at least 2 mel bins, got {n_mels}")));
        }
        if !(0.0 <= fmin && fmin < fmax && fmax <= sample_rate / 2.0) {
            return Err(OvError::InvalidConfig(format!(
                "mel range {fmin}..{fmax} Hz invalid for rate {sample_rate}"
            )));
        }
        if n_fft < 2 {
            return Err(OvError::InvalidConfig("n_fft must be at least 2".into()));
        }
        let n_bins = n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate / n_fft as f64;

        let mut weights = vec![0.0; n_mels * n_bins];
        let mut spans = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            let mut first = None;
            let mut last = 0;
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let up = (f - left) / (center - left);
                let down = (right - f) / (right - center);
                *w = up.min(down).max(0.0);
                if *w > 0.0 {
                    first.get_or_insert(k);
                    last = k;
                }
            }
            spans.push(match first {
                Some(f) => (f, last + 1 - f),
                None => (0, 0),
            });
        }
        Ok(MelFilterbank {
            n_mels,
            n_bins,
            weights,
            centers_hz: edges[1..=n_mels].to_vec(),
            spans,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Row-major `n_mels × n_bins` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn filter(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Projects a power spectrum of `n_bins` values onto the mel bins.
    pub fn project(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (m, o) in out.iter_mut().enumerate().take(self.n_mels) {
            let (start, len) = self.spans[m];
            let w = &self.filter(m)[start..start + len];
            *o = w.iter().zip(&power[start..start + len]).map(|(a, b)| a * b).sum();
        }
    }
}
