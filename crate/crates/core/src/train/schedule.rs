use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{OvError, Result};

/// Optimizer constants exposed for external trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub peak_lr: f64,
    pub rampup_steps: u64,
    pub cycle_steps: u64,
    pub cycle_decay: f64,
    pub weight_decay: f64,
    pub bn_momentum: f64,
    pub dropout_p: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            peak_lr: 0.008,
            rampup_steps: 500,
            cycle_steps: 1000,
            cycle_decay: 0.975,
            weight_decay: 3e-4,
            bn_momentum: 0.95,
            dropout_p: 0.15,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cycle_decay > 0.0 && self.cycle_decay <= 1.0) {
            return Err(OvError::InvalidConfig("cycle_decay must lie in (0, 1]".into()));
        }
        if self.rampup_steps == 0 || self.cycle_steps == 0 {
            return Err(OvError::InvalidConfig("step counts must be positive".into()));
        }
        if !(self.peak_lr > 0.0) {
            return Err(OvError::InvalidConfig("peak_lr must be positive".into()));
        }
        Ok(())
    }
}

/// Linear warm-up to `peak_lr`, then cosine annealing with warm restarts
/// whose peak decays by `cycle_decay` per cycle.
pub fn lr_schedule(step: u64, p: &ScheduleParams) -> f64 {
    if step < p.rampup_steps {
        return p.peak_lr * step as f64 / p.rampup_steps as f64;
    }
    let s = step - p.rampup_steps;
    let cycle = s / p.cycle_steps;
    let u = (s % p.cycle_steps) as f64 / p.cycle_steps as f64;
    p.peak_lr * p.cycle_decay.powi(cycle as i32) * 0.5 * (1.0 + (PI * u).cos())
}
