use nalgebra::{DMatrix, DVector};

use crate::error::{NiocError, Result};
use crate::math::linalg::{spd_solve, symmetrize};
use crate::model::{PomdpModel, System};

use super::FilterGains;

/// Extended Kalman filter gains linearized along the nominal `(xs, us)`.
///
/// The filter is in one-step-ahead predictor form: `b_t` estimates `x_t` from
/// `y_1..y_{t−1}`, and the update uses the innovation of `y_t`. Covariances are
/// propagated in Joseph form, which keeps them PSD for any gain.
pub fn filter_pass<S: System>(
    model: &PomdpModel<S>,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
) -> Result<FilterGains> {
    let steps = us.len();
    if xs.len() != steps + 1 {
        return Err(NiocError::DimensionMismatch(format!(
            "{} nominal states for {} controls",
            xs.len(),
            steps
        )));
    }
    let mut p = symmetrize(&model.belief_cov);
    let mut gains = Vec::with_capacity(steps);
    let mut covs = Vec::with_capacity(steps + 1);
    let mut transitions = Vec::with_capacity(steps);
    covs.push(p.clone());
    for t in 0..steps {
        let dyn_lin = model.linearize_dynamics(&xs[t], &us[t]);
        let obs = model.linearize_observation(&xs[t]);
        let (a, h) = (&dyn_lin.a, &obs.h);
        let r = &obs.g * obs.g.transpose();
        let s = symmetrize(&(h * &p * h.transpose() + &r));
        let k = if s.iter().all(|v| *v == 0.0) {
            DMatrix::zeros(a.nrows(), h.nrows())
        } else {
            spd_solve(&s, &(h * &p * a.transpose()), "innovation covariance")?.transpose()
        };
        let m = a - &k * h;
        let f = &dyn_lin.f;
        p = symmetrize(&(&m * &p * m.transpose() + f * f.transpose() + &k * &r * k.transpose()));
        if p.iter().any(|v| !v.is_finite()) {
            return Err(NiocError::non_finite(format!("filter covariance at step {t}")));
        }
        gains.push(k);
        covs.push(p.clone());
        transitions.push(m);
    }
    Ok(FilterGains {
        gains,
        covs,
        transitions,
    })
}

/// Belief update `b' = f(b, u, 0) + K (y − h(b, 0))`.
pub fn ekf_step<S: System>(
    model: &PomdpModel<S>,
    b: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
    k: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let d = model.dims();
    if b.len() != d.n || u.len() != d.nu || y.len() != d.m || k.shape() != (d.n, d.m) {
        return Err(NiocError::DimensionMismatch(format!(
            "ekf step with b:{} u:{} y:{} K:{:?}",
            b.len(),
            u.len(),
            y.len(),
            k.shape()
        )));
    }
    Ok(model.step_mean(b, u) + k * (y - model.observe_mean(b)))
}
