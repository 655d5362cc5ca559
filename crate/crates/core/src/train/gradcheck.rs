//! Central-difference gradient checks in f64.
//!
//! There is no autodiff here: the check compares the step-`h` estimate with
//! the step-`h/2` estimate at each sampled coordinate. Smooth coordinates
//! agree to `O(h²)`; a large gap means a kink (LeakyReLU, clamp) sits within
//! the step and the coordinate is flagged.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{OvError, Result};
use crate::model::schema::param_specs;
use crate::model::{ModelConfig, ParamMap};

/// Relative gap above which a coordinate counts as non-smooth.
pub const NON_SMOOTH_REL: f64 = 1e-2;

/// Default step. Larger steps straddle LeakyReLU kinks often enough at
/// He initialization to flag smooth coordinates.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor so that vanishing gradients do not blow up the ratio.
const REL_FLOOR: f64 = 1e-6;

/// `(f(x+h) − f(x−h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// A learnable scalar addressed by tensor name and flat offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coordinate {
    pub name: String,
    pub offset: usize,
}

/// Every learnable scalar of `cfg`, in file order.
pub fn learnable_coordinates(cfg: &ModelConfig) -> Vec<Coordinate> {
    param_specs(cfg)
        .into_iter()
        .filter(|s| s.kind.learnable())
        .flat_map(|s| {
            let n = s.numel();
            let name = s.name;
            (0..n).map(move |offset| Coordinate {
                name: name.clone(),
                offset,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub index: usize,
    pub coordinate: Coordinate,
    pub grad: f64,
    pub grad_half: f64,
    pub rel_error: f64,
    pub non_smooth: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub h: f64,
    pub checks: Vec<CoordCheck>,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn non_smooth(&self) -> impl Iterator<Item = &CoordCheck> {
        self.checks.iter().filter(|c| c.non_smooth)
    }
}

fn eval_at<F>(loss_fn: &F, params: &mut ParamMap<f64>, index: usize, c: &Coordinate, v: f64) -> Result<f64>
where
    F: Fn(&ParamMap<f64>) -> Result<f64>,
{
    params[c.name.as_str()].data[c.offset] = v;
    let l = loss_fn(params)?;
    if !l.is_finite() {
        return Err(OvError::NonFinite {
            coordinate: index,
            name: format!("{}[{}]", c.name, c.offset),
        });
    }
    Ok(l)
}

/// Central-difference derivative of `loss_fn` along one coordinate.
pub fn coordinate_derivative<F>(
    loss_fn: &F,
    params: &mut ParamMap<f64>,
    index: usize,
    c: &Coordinate,
    h: f64,
) -> Result<f64>
where
    F: Fn(&ParamMap<f64>) -> Result<f64>,
{
    let x = params[c.name.as_str()].data[c.offset];
    let plus = eval_at(loss_fn, params, index, c, x + h);
    let minus = plus.and_then(|p| Ok((p, eval_at(loss_fn, params, index, c, x - h)?)));
    params[c.name.as_str()].data[c.offset] = x;
    let (p, m) = minus?;
    Ok((p - m) / (2.0 * h))
}

/// Checks `n_coords` learnable coordinates drawn without replacement.
pub fn finite_diff_gradcheck<F>(
    loss_fn: F,
    cfg: &ModelConfig,
    params: &ParamMap<f64>,
    n_coords: usize,
    h: f64,
    seed: u64,
) -> Result<GradcheckReport>
where
    F: Fn(&ParamMap<f64>) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(OvError::InvalidConfig("step h must be positive".into()));
    }
    let coords = learnable_coordinates(cfg);
    let base = loss_fn(params)?;
    if !base.is_finite() {
        return Err(OvError::NonFinite {
            coordinate: 0,
            name: "unperturbed loss".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, coords.len(), n_coords.min(coords.len())).into_vec();
    picks.sort_unstable();
    let mut work = params.clone();
    let mut checks = Vec::with_capacity(picks.len());
    for index in picks {
        let c = &coords[index];
        let grad = coordinate_derivative(&loss_fn, &mut work, index, c, h)?;
        let grad_half = coordinate_derivative(&loss_fn, &mut work, index, c, h / 2.0)?;
        let rel_error = relative_error(grad, grad_half);
        checks.push(CoordCheck {
            index,
            coordinate: c.clone(),
            grad,
            grad_half,
            rel_error,
            non_smooth: rel_error > NON_SMOOTH_REL,
        });
    }
    let max_rel_error = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        h,
        checks,
        max_rel_error,
    })
}
