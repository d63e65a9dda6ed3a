//! Approximate likelihood of observed state trajectories under a model of a
//! partially observing, noisy, maximum-entropy agent.
//!
//! The agent's controller and filter are linearized once around the observed
//! states and Gauss-Newton estimates of the unobserved controls. The joint
//! dynamics of true state and agent belief are then propagated as a Gaussian;
//! each observed state contributes the density of its marginal and is
//! conditioned on to track the distribution of the belief.

mod controls;
mod joint;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{NiocError, Result};
use crate::math::linalg::symmetrize;
use crate::math::GaussianJoint;
use crate::model::{ModelFactory, ParamVector, PomdpModel, System, Trajectory, Variant};
use crate::solvers::{backward_pass, filter_pass, ControlLaw, FilterGains};

pub use controls::{estimate_controls, ControlEstimate, GN_MAX_ITER};
pub use joint::{joint_dynamics, joint_step, JointStep};

/// Singular values of a covariance factor below this fraction of the largest
/// are treated as exact zeros: the density is evaluated on the support.
pub const SUPPORT_RTOL: f64 = 1e-7;

/// Gaussian over the agent's belief mean given the states observed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTrack {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Controller and filter of the agent linearized around an observed
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationContext {
    pub controls: Vec<DVector<f64>>,
    /// Steps whose control estimate did not meet the convergence criteria.
    pub unconverged_steps: Vec<usize>,
    pub law: ControlLaw,
    /// Present for partially observable variants.
    pub filter: Option<FilterGains>,
}

/// Linearize controller and filter around `(xs, controls)`; controls are
/// estimated from the states when not supplied.
pub fn build_linearization<S: System>(
    model: &PomdpModel<S>,
    xs: &[DVector<f64>],
    controls: Option<&[DVector<f64>]>,
) -> Result<LinearizationContext> {
    if xs.is_empty() {
        return Err(NiocError::InvalidInput("empty trajectory".into()));
    }
    let (controls, unconverged_steps) = match controls {
        Some(us) => (us.to_vec(), Vec::new()),
        None => {
            let est = estimate_controls(model, xs);
            (est.controls, est.unconverged)
        }
    };
    if controls.len() + 1 != xs.len() {
        return Err(NiocError::DimensionMismatch(format!(
            "{} controls for {} states",
            controls.len(),
            xs.len()
        )));
    }
    let filter = if model.variant.is_partial() {
        Some(filter_pass(model, xs, &controls)?)
    } else {
        None
    };
    let info = if model.variant == Variant::Partial {
        filter.as_ref()
    } else {
        None
    };
    let law = backward_pass(model, xs, &controls, info)?;
    Ok(LinearizationContext {
        controls,
        unconverged_steps,
        law,
        filter,
    })
}

/// Log density of `x` under N(mean, F·Fᵀ) restricted to the column space of
/// the factor `F`, with the orthonormal basis and singular values used.
pub(crate) struct SupportDensity {
    pub log_density: f64,
    pub basis: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub coords: DVector<f64>,
}

pub(crate) fn support_density(mean: &DVector<f64>, factor: &DMatrix<f64>, x: &DVector<f64>) -> Result<SupportDensity> {
    let n = mean.len();
    if factor.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
        return Err(NiocError::non_finite("transition covariance"));
    }
    if factor.ncols() == 0 || factor.amax() == 0.0 {
        return Ok(SupportDensity {
            log_density: 0.0,
            basis: DMatrix::zeros(n, 0),
            singular_values: DVector::zeros(0),
            coords: DVector::zeros(0),
        });
    }
    let svd = factor.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s_max = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > SUPPORT_RTOL * s_max)
        .collect();
    let basis = u.select_columns(&keep);
    let singular_values = DVector::from_iterator(keep.len(), keep.iter().map(|&i| svd.singular_values[i]));
    let coords = basis.transpose() * (x - mean);
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let log_density = coords
        .iter()
        .zip(singular_values.iter())
        .map(|(z, s)| -0.5 * (z / s).powi(2) - s.ln() - half_log_2pi)
        .sum();
    Ok(SupportDensity {
        log_density,
        basis,
        singular_values,
        coords,
    })
}

/// Density of the observed next state under the x-marginal of `step` and the
/// belief distribution conditioned on it.
pub fn condition_on_state(step: &JointStep, x_next: &DVector<f64>) -> Result<(f64, BeliefTrack)> {
    let joint: &GaussianJoint = &step.joint;
    let d = support_density(&joint.mean_x, &step.x_factor, x_next)?;
    // Σ_bx U_r S_r⁻² maps support coordinates to the belief
    let cross = joint.cov_xb.transpose() * &d.basis;
    let inv_var = d.singular_values.map(|s| 1.0 / (s * s));
    let gain = &cross * DMatrix::from_diagonal(&inv_var);
    let mean = &joint.mean_b + &gain * &d.coords;
    let cov = symmetrize(&(&joint.cov_bb - &gain * cross.transpose()));
    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) || !d.log_density.is_finite() {
        return Err(NiocError::non_finite("belief conditioning"));
    }
    Ok((d.log_density, BeliefTrack { mean, cov }))
}

/// Approximate log p(x_2..x_T | x_1) for a partially observable variant.
pub fn log_likelihood<S: System>(
    model: &PomdpModel<S>,
    xs: &[DVector<f64>],
    ctx: &LinearizationContext,
) -> Result<f64> {
    if !model.variant.is_partial() {
        return log_likelihood_fullobs(model, xs, ctx);
    }
    let mut belief = BeliefTrack {
        mean: xs[0].clone(),
        cov: model.belief_cov.clone(),
    };
    let mut total = 0.0;
    for t in 0..xs.len() - 1 {
        let step = joint_step(model, ctx, t, &xs[t], &belief)?;
        let (ll, next) = condition_on_state(&step, &xs[t + 1])?;
        total += ll;
        belief = next;
    }
    Ok(total)
}

/// Log likelihood when the agent observes its state: each transition is
/// N(f(x_t, π_t(x_t), 0), J_v J_vᵀ + J_ξ J_ξᵀ).
pub fn log_likelihood_fullobs<S: System>(
    model: &PomdpModel<S>,
    xs: &[DVector<f64>],
    ctx: &LinearizationContext,
) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..xs.len() - 1 {
        let u = ctx.law.mean_control(t, &xs[t]);
        let lin = model.linearize_dynamics(&xs[t], &u);
        let bc = &lin.b * &ctx.law.noise_factors[t];
        let factor = concat_columns(&[&lin.f, &bc]);
        total += support_density(&lin.value, &factor, &xs[t + 1])?.log_density;
    }
    Ok(total)
}

pub(crate) fn concat_columns(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Linearize and evaluate one trajectory.
pub fn trajectory_log_likelihood<S: System>(
    model: &PomdpModel<S>,
    xs: &[DVector<f64>],
    controls: Option<&[DVector<f64>]>,
) -> Result<f64> {
    if xs.len() <= 1 {
        return Ok(0.0);
    }
    let ctx = build_linearization(model, xs, controls)?;
    log_likelihood(model, xs, &ctx)
}

/// Sum of per-trajectory log likelihoods, with failures reported.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLogLik {
    /// −∞ when any trajectory failed.
    pub total: f64,
    pub per_trajectory: Vec<f64>,
    pub failures: Vec<(usize, NiocError)>,
}

impl DatasetLogLik {
    pub(crate) fn from_results(results: Vec<Result<f64>>) -> Self {
        let mut per_trajectory = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) if v.is_finite() => per_trajectory.push(v),
                Ok(_) => {
                    per_trajectory.push(f64::NEG_INFINITY);
                    failures.push((i, NiocError::non_finite(format!("log likelihood of trajectory {i}"))));
                }
                Err(e) => {
                    per_trajectory.push(f64::NEG_INFINITY);
                    failures.push((i, e));
                }
            }
        }
        // summed in index order for reproducibility
        let total = if failures.is_empty() {
            per_trajectory.iter().sum()
        } else {
            f64::NEG_INFINITY
        };
        Self {
            total,
            per_trajectory,
            failures,
        }
    }
}

/// Controls estimated once per trajectory, for factories whose noiseless
/// dynamics do not depend on θ.
pub fn estimate_dataset_controls<S: System>(model: &PomdpModel<S>, trajectories: &[Trajectory]) -> Vec<Vec<DVector<f64>>> {
    trajectories
        .par_iter()
        .map(|tr| estimate_controls(model, &tr.states).controls)
        .collect()
}

/// Log likelihood of a set of trajectories at `theta`.
///
/// `controls` optionally supplies per-trajectory control estimates (or true
/// controls) used as linearization points. Only model construction errors are
/// returned as `Err`; per-trajectory failures become −∞ with diagnostics.
pub fn dataset_log_likelihood<F: ModelFactory>(
    factory: &F,
    trajectories: &[Trajectory],
    theta: &ParamVector,
    controls: Option<&[Vec<DVector<f64>>]>,
) -> Result<DatasetLogLik> {
    let model = factory.build(theta)?;
    if let Some(c) = controls {
        if c.len() != trajectories.len() {
            return Err(NiocError::DimensionMismatch(format!(
                "{} control sequences for {} trajectories",
                c.len(),
                trajectories.len()
            )));
        }
    }
    let results: Vec<Result<f64>> = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, tr)| trajectory_log_likelihood(&model, &tr.states, controls.map(|c| c[i].as_slice())))
        .collect();
    Ok(DatasetLogLik::from_results(results))
}
