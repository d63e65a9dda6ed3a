use nalgebra::DVector;

use crate::error::{NiocError, Result};
use crate::model::{PomdpModel, System, Variant};

use super::{backward_pass, filter_pass, ControlLaw, FilterGains, SolverSettings};

/// Output of [`ilqg_solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub law: ControlLaw,
    /// Agent's filter along the final nominal (partially observable variants).
    pub filter: Option<FilterGains>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub iterations: usize,
    /// False when the iteration budget ran out; the last iterate is still
    /// returned.
    pub converged: bool,
    /// Deterministic cost of the nominal trajectory.
    pub cost: f64,
}

/// Cost of a nominal trajectory plus the second-order expected cost of the
/// noise around it, using the value Hessians and error weights of `law`.
///
/// Without noise this is the deterministic trajectory cost.
pub fn expected_cost<S: System>(
    model: &PomdpModel<S>,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    law: &ControlLaw,
    filter: Option<&FilterGains>,
) -> f64 {
    let mut total = model.trajectory_cost(xs, us);
    for t in 0..us.len() {
        let lin = model.linearize_dynamics(&xs[t], &us[t]);
        let v = &law.value_hessians[t + 1];
        let weights = law.error_weights.as_ref().map(|w| &w[t + 1]);
        let f = &lin.f;
        total += 0.5 * (f.transpose() * v * f).trace();
        if let (Some(w), Some(filter)) = (weights, filter) {
            total += 0.5 * (f.transpose() * w * f).trace();
            let kg = &filter.gains[t] * model.linearize_observation(&xs[t]).g;
            total += 0.5 * (kg.transpose() * w * kg).trace();
        }
    }
    total
}

fn forward<S: System>(
    model: &PomdpModel<S>,
    law: &ControlLaw,
    step: f64,
) -> Option<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let steps = law.steps();
    let mut xs = Vec::with_capacity(steps + 1);
    let mut us = Vec::with_capacity(steps);
    xs.push(model.x1.clone());
    for t in 0..steps {
        let x = &xs[t];
        let u = &law.gains[t] * (x - &law.x_nom[t]) + &law.offsets[t] * step + &law.u_nom[t];
        let next = model.step_mean(x, &u);
        if next.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        us.push(u);
        xs.push(next);
    }
    Some((xs, us))
}

fn max_abs_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

/// Iterative LQG for the model's variant.
///
/// Each iteration linearizes around the current nominal, runs the backward
/// pass (with the estimation-error term for [`Variant::Partial`]) and
/// backtracks on the offsets until the expected cost decreases. Iteration
/// stops when the nominal states move by less than `settings.tol` or when no
/// step size improves the cost.
pub fn ilqg_solve<S: System>(model: &PomdpModel<S>, settings: &SolverSettings) -> Result<Solution> {
    if model.horizon == 0 {
        return Err(NiocError::InvalidInput("horizon must be at least 1".into()));
    }
    let steps = model.horizon - 1;
    let u0 = DVector::from_vec(model.system.initial_control());
    let mut us = vec![u0; steps];
    let mut xs = model.rollout(&us);
    let with_info = model.variant == Variant::Partial;

    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        let filter = if with_info {
            Some(filter_pass(model, &xs, &us)?)
        } else {
            None
        };
        let law = backward_pass(model, &xs, &us, filter.as_ref())?;
        let current = expected_cost(model, &xs, &us, &law, filter.as_ref());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..settings.line_search_steps {
            if let Some((nx, nu)) = forward(model, &law, step) {
                let cost = expected_cost(model, &nx, &nu, &law, filter.as_ref());
                if cost < current {
                    accepted = Some((nx, nu));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((nx, nu)) = accepted else {
            converged = true;
            break;
        };
        let change = max_abs_diff(&nx, &xs);
        xs = nx;
        us = nu;
        if change < settings.tol {
            converged = true;
            break;
        }
    }

    let filter = if model.variant.is_partial() {
        Some(filter_pass(model, &xs, &us)?)
    } else {
        None
    };
    let law = backward_pass(model, &xs, &us, if with_info { filter.as_ref() } else { None })?;
    let cost = model.trajectory_cost(&xs, &us);
    Ok(Solution {
        law,
        filter,
        states: xs,
        controls: us,
        iterations,
        converged,
        cost,
    })
}
