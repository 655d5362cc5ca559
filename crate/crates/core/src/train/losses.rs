//! Training losses: positive-weighted BCE for onset rolls and the masked
//! cross-entropy for velocity rolls.

use serde::{Deserialize, Serialize};

use crate::error::{OvError, Result};
use crate::model::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Which label grid masks the velocity loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocityMask {
    /// Onset frames only.
    #[default]
    Onset,
    /// Onset frames plus their extension (the BCE target).
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub positive_weight: f64,
    pub eps: f64,
    pub reduction: Reduction,
    pub velocity_mask: VelocityMask,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 10.0,
            positive_weight: 8.0,
            eps: 1e-7,
            reduction: Reduction::Mean,
            velocity_mask: VelocityMask::Onset,
        }
    }
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(OvError::shape(what, format!("{a} targets vs {b} predictions")));
    }
    Ok(())
}

fn xent(t: f64, p: f64, pos_weight: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    -(pos_weight * t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// `Σ w·(−t·ln p − (1−t)·ln(1−p))` with positives weighted by
/// `positive_weight`, reduced by `reduction`.
pub fn weighted_bce<T: Real>(
    target: &[T],
    pred: &[T],
    positive_weight: f64,
    eps: f64,
    reduction: Reduction,
) -> Result<f64> {
    check_len("weighted_bce", target.len(), pred.len())?;
    let sum: f64 = target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| xent(t.f64(), p.f64(), positive_weight, eps))
        .sum();
    Ok(match reduction {
        Reduction::Sum => sum,
        Reduction::Mean => sum / target.len().max(1) as f64,
    })
}

/// Cross-entropy between velocity target and prediction, counted only under
/// `mask`; the mean divides by `max(1, Σ mask)`.
pub fn masked_velocity_loss<T: Real>(
    mask: &[T],
    target: &[T],
    pred: &[T],
    eps: f64,
    reduction: Reduction,
) -> Result<f64> {
    check_len("masked_velocity_loss", mask.len(), target.len())?;
    check_len("masked_velocity_loss", target.len(), pred.len())?;
    let mut sum = 0.0;
    let mut count = 0.0;
    for ((&m, &t), &p) in mask.iter().zip(target).zip(pred) {
        let m = m.f64();
        if m != 0.0 {
            sum += m * xent(t.f64(), p.f64(), 1.0, eps);
            count += m;
        }
    }
    Ok(match reduction {
        Reduction::Sum => sum,
        Reduction::Mean => sum / count.max(1.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Unweighted BCE of each onset stage.
    pub onset_bce: Vec<f64>,
    /// Unweighted masked velocity loss.
    pub velocity: f64,
}

/// `λ1·Σ_i BCE(extended, stage_i) + λ2·velocity_loss`.
pub fn multitask_loss<T: Real>(
    extended_labels: &[T],
    stage_probs: &[&[T]],
    onset_mask: &[T],
    velocity_target: &[T],
    velocity_pred: &[T],
    w: &LossWeights,
) -> Result<LossBreakdown> {
    if stage_probs.is_empty() {
        return Err(OvError::InvalidConfig("multitask loss needs at least one stage".into()));
    }
    let onset_bce = stage_probs
        .iter()
        .map(|p| weighted_bce(extended_labels, p, w.positive_weight, w.eps, w.reduction))
        .collect::<Result<Vec<_>>>()?;
    let mask = match w.velocity_mask {
        VelocityMask::Onset => onset_mask,
        VelocityMask::Extended => extended_labels,
    };
    let velocity = masked_velocity_loss(mask, velocity_target, velocity_pred, w.eps, w.reduction)?;
    let total = w.lambda1 * onset_bce.iter().sum::<f64>() + w.lambda2 * velocity;
    Ok(LossBreakdown {
        total,
        onset_bce,
        velocity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn perfect_prediction_near_zero() {
        let t = [1.0f32, 0.0, 0.0, 1.0];
        let l = weighted_bce(&t, &t, 8.0, 1e-7, Reduction::Mean).unwrap();
        assert!((0.0..1e-5).contains(&l), "{l}");
    }

    #[test]
    fn half_prediction_closed_form() {
        let (p, n) = (3usize, 17usize);
        let mut t = vec![0.0f64; p + n];
        t[..p].iter_mut().for_each(|v| *v = 1.0);
        let pred = vec![0.5f64; p + n];
        let l = weighted_bce(&t, &pred, 8.0, 1e-7, Reduction::Mean).unwrap();
        let expect = LN_2 * (8.0 * p as f64 + n as f64) / (p + n) as f64;
        assert!((l - expect).abs() < 1e-12);
        let s = weighted_bce(&t, &pred, 8.0, 1e-7, Reduction::Sum).unwrap();
        assert!((s - expect * (p + n) as f64).abs() < 1e-9);
    }

    #[test]
    fn velocity_loss_cases() {
        let z = [0.0f64; 4];
        assert_eq!(masked_velocity_loss(&z, &[0.3; 4], &[0.9; 4], 1e-7, Reduction::Mean).unwrap(), 0.0);
        let m = [1.0, 0.0, 1.0, 0.0];
        let l = masked_velocity_loss(&m, &[1.0; 4], &[1.0 - 1e-7; 4], 1e-7, Reduction::Mean).unwrap();
        assert!(l < 1e-6);
        let l = masked_velocity_loss(&m, &[0.5; 4], &[0.5; 4], 1e-7, Reduction::Mean).unwrap();
        assert!((l - LN_2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(weighted_bce(&[1.0f32], &[0.5, 0.5], 8.0, 1e-7, Reduction::Mean).is_err());
        assert!(masked_velocity_loss(&[1.0f32], &[0.5], &[0.5, 0.1], 1e-7, Reduction::Mean).is_err());
    }

    #[test]
    fn single_stage_without_velocity_is_bce() {
        let t = [1.0f64, 0.0, 0.0];
        let p = [0.7f64, 0.2, 0.4];
        let w = LossWeights {
            lambda2: 0.0,
            ..Default::default()
        };
        let l = multitask_loss(&t, &[&p], &t, &t, &p, &w).unwrap();
        let b = weighted_bce(&t, &p, 8.0, 1e-7, Reduction::Mean).unwrap();
        assert_eq!(l.total, b);
        assert_eq!(l.onset_bce, vec![b]);
    }
}
