use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::schema::{param_specs, ParamKind};
use crate::model::{ModelConfig, ModelWeights, Param, ParamMap, Real};

/// He-normal weights (`N(0, 2/fan_in)`), zero biases, attention biases of 1,
/// and identity norms. Deterministic for a given seed; values are drawn in
/// f64 so the f32 and f64 maps agree up to rounding.
pub fn he_init_params<T: Real>(cfg: &ModelConfig, seed: u64) -> ParamMap<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    param_specs(cfg)
        .into_iter()
        .map(|s| {
            let n = s.numel();
            let data: Vec<T> = match s.kind {
                ParamKind::Weight { fan_in } => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    (0..n).map(|_| T::of(normal.sample(&mut rng))).collect()
                }
                ParamKind::AttentionBias | ParamKind::NormScale | ParamKind::RunningVar => vec![T::one(); n],
                ParamKind::Bias | ParamKind::NormShift | ParamKind::RunningMean => vec![T::zero(); n],
            };
            (s.name, Param { dims: s.dims, data })
        })
        .collect()
}

pub fn he_init(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights> {
    ModelWeights::new(cfg.clone(), he_init_params(cfg, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = ModelConfig::micro();
        let a = he_init(&cfg, 5).unwrap().to_bytes();
        assert_eq!(a, he_init(&cfg, 5).unwrap().to_bytes());
        assert_ne!(a, he_init(&cfg, 6).unwrap().to_bytes());
    }

    #[test]
    fn attention_biases_are_one() {
        let w = he_init(&ModelConfig::paper(), 1).unwrap();
        let mut seen = 0;
        for (name, p) in w.params() {
            if name.ends_with("att.mlp2.bias") {
                assert!(p.data.iter().all(|&v| v == 1.0));
                seen += 1;
            } else if name.ends_with(".bias") && !name.contains("bn") && !name.ends_with("sbn.bias") {
                assert!(p.data.iter().all(|&v| v == 0.0), "{name}");
            }
        }
        assert_eq!(seen, 3 + 3 * 3 + 1);
    }

    #[test]
    fn large_layer_variance() {
        let w = he_init(&ModelConfig::paper(), 2).unwrap();
        let p = w.get("stage0.collapse.weight").unwrap();
        let fan_in = (12 * 88 * 3) as f64;
        let n = p.data.len() as f64;
        assert!(n > 10_000.0);
        let mean = p.data.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = p.data.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expect = 2.0 / fan_in;
        assert!((var - expect).abs() < 0.1 * expect, "{var} vs {expect}");
    }
}
