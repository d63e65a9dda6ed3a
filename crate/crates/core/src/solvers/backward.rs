use nalgebra::{DMatrix, DVector};

use crate::error::{NiocError, Result};
use crate::math::linalg::{cholesky_jittered, project_psd, psd_factor, symmetrize};
use crate::model::{PomdpModel, System};

use super::{ControlLaw, FilterGains};

/// Smallest eigenvalue allowed in the control Hessian.
pub const QUU_FLOOR: f64 = 1e-8;
/// Frobenius norm of a value Hessian beyond which the recursion is abandoned.
pub const VALUE_NORM_LIMIT: f64 = 1e12;

fn check_finite(vs: &[DVector<f64>], what: &str) -> Result<()> {
    if vs.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(NiocError::non_finite(what));
    }
    Ok(())
}

/// One LQ backward recursion around the nominal `(xs, us)`.
///
/// Besides the deterministic cost the recursion accounts for the expected
/// cost of signal-dependent motor noise (Gauss-Newton terms in the noise
/// columns). With `info` given, it also charges the expected cost of the
/// agent's estimation error under the supplied filter gains, which makes
/// controls that reduce observation noise worth their effort.
pub fn backward_pass<S: System>(
    model: &PomdpModel<S>,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    info: Option<&FilterGains>,
) -> Result<ControlLaw> {
    let d = model.dims();
    let (n, nu) = (d.n, d.nu);
    let steps = us.len();
    if xs.len() != steps + 1 {
        return Err(NiocError::DimensionMismatch(format!(
            "{} nominal states for {} controls",
            xs.len(),
            steps
        )));
    }
    if let Some(f) = info {
        if f.gains.len() != steps {
            return Err(NiocError::DimensionMismatch(format!(
                "{} filter gains for {} controls",
                f.gains.len(),
                steps
            )));
        }
    }
    check_finite(xs, "nominal states")?;
    check_finite(us, "nominal controls")?;

    let fin = model.quadratize_final(&xs[steps]);
    let mut vx = fin.grad;
    let mut vxx = project_psd(&fin.hess, 0.0);
    let mut w = DMatrix::<f64>::zeros(n, n);

    let mut gains = vec![DMatrix::zeros(nu, n); steps];
    let mut offsets = vec![DVector::zeros(nu); steps];
    let mut quus = vec![DMatrix::zeros(nu, nu); steps];
    let mut factors = vec![DMatrix::zeros(nu, nu); steps];
    let mut value_hessians = vec![DMatrix::zeros(n, n); steps + 1];
    let mut error_weights = info.map(|_| vec![DMatrix::zeros(n, n); steps + 1]);
    value_hessians[steps] = vxx.clone();

    for t in (0..steps).rev() {
        let (x, u) = (&xs[t], &us[t]);
        let lin = model.linearize_dynamics(x, u);
        let cost = model.quadratize_running(x, u, t);
        let mut ab = DMatrix::zeros(n, n + nu);
        ab.columns_mut(0, n).copy_from(&lin.a);
        ab.columns_mut(n, nu).copy_from(&lin.b);

        // the nominal need not be dynamically consistent (observed states
        // with estimated controls), so expand V around where the step lands
        let defect = &lin.value - &xs[t + 1];
        let mut qz = &cost.grad + ab.transpose() * (&vx + &vxx * &defect);
        let mut qzz = project_psd(&cost.hess, 0.0) + ab.transpose() * &vxx * &ab;

        // estimation errors are driven by motor noise as well
        let noise_weight = match info {
            Some(_) => &vxx + &w,
            None => vxx.clone(),
        };
        for (i, ji) in model.dynamics_noise_derivatives(x, u).iter().enumerate() {
            let vj = &noise_weight * ji;
            qz += vj.transpose() * lin.f.column(i);
            qzz += ji.transpose() * &vj;
        }
        if let Some(filter) = info {
            let k = &filter.gains[t];
            let obs = model.linearize_observation(x);
            for (j, dg) in model.observation_noise_derivatives(x).iter().enumerate() {
                let a = k * obs.g.column(j);
                let dk = k * dg;
                let wd = &w * &dk;
                let mut qx = qz.rows_mut(0, n);
                qx += wd.transpose() * &a;
                let mut qxx = qzz.view_mut((0, 0), (n, n));
                qxx += dk.transpose() * &wd;
            }
        }

        let qx = qz.rows(0, n);
        let qu = qz.rows(n, nu);
        let qxx = qzz.view((0, 0), (n, n));
        let qux = qzz.view((n, 0), (nu, n)).into_owned();
        let quu = project_psd(&qzz.view((n, n), (nu, nu)).into_owned(), QUU_FLOOR);
        let (chol, _) = cholesky_jittered(&quu, "control Hessian")?;
        let l = -chol.solve(&qux);
        let m = -chol.solve(&qu.into_owned());

        vx = qx + l.transpose() * (&quu * &m) + l.transpose() * qu + qux.transpose() * &m;
        vxx = symmetrize(
            &(qxx + l.transpose() * &quu * &l + l.transpose() * &qux + qux.transpose() * &l),
        );
        let norm = vxx.norm();
        if !norm.is_finite() || vx.iter().any(|v| !v.is_finite()) {
            return Err(NiocError::non_finite(format!("value function at step {t}")));
        }
        if norm > VALUE_NORM_LIMIT {
            return Err(NiocError::DivergedValueRecursion { step: t, norm });
        }
        if let (Some(filter), Some(ws)) = (info, error_weights.as_mut()) {
            let mt = &filter.transitions[t];
            w = symmetrize(&(l.transpose() * &quu * &l + mt.transpose() * &w * mt));
            ws[t] = w.clone();
        }

        factors[t] = if model.alpha > 0.0 {
            psd_factor(&(chol.inverse() * model.alpha))
        } else {
            DMatrix::zeros(nu, nu)
        };
        gains[t] = l;
        offsets[t] = m;
        quus[t] = quu;
        value_hessians[t] = vxx.clone();
    }

    Ok(ControlLaw {
        gains,
        offsets,
        quu: quus,
        noise_factors: factors,
        x_nom: xs.to_vec(),
        u_nom: us.to_vec(),
        alpha: model.alpha,
        value_hessians,
        error_weights,
    })
}
