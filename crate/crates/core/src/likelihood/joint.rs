use nalgebra::{DMatrix, DVector};

use crate::error::{NiocError, Result};
use crate::math::linalg::{psd_factor, symmetrize};
use crate::math::real::Real;
use crate::math::GaussianJoint;
use crate::model::{PomdpModel, System};

use super::{concat_columns, BeliefTrack, LinearizationContext};

/// Linear-Gaussian approximation of p(x_{t+1}, b_{t+1} | x_1..x_t).
#[derive(Debug, Clone, PartialEq)]
pub struct JointStep {
    pub joint: GaussianJoint,
    /// Jacobians of the joint dynamics with respect to the belief, motor
    /// noise, observation noise and policy noise; rows are (x', b').
    pub j_b: DMatrix<f64>,
    pub j_v: DMatrix<f64>,
    pub j_w: DMatrix<f64>,
    pub j_xi: DMatrix<f64>,
    /// Factor of the x-block covariance: rows 0..n of
    /// [J_b·chol(Σ_b) | J_v | J_w | J_ξ].
    pub x_factor: DMatrix<f64>,
}

fn mat_vec<R: Real>(m: &DMatrix<f64>, x: &[R]) -> Vec<R> {
    (0..m.nrows())
        .map(|i| {
            let mut acc = R::zero();
            for (j, &xj) in x.iter().enumerate() {
                acc = acc + xj * m[(i, j)];
            }
            acc
        })
        .collect()
}

/// The joint dynamics g(x_t, b_t, v_t, w_t, ξ_t) = (x_{t+1}, b_{t+1}) of state
/// and belief mean under the linearized controller and filter.
pub fn joint_dynamics<R: Real, S: System>(
    model: &PomdpModel<S>,
    ctx: &LinearizationContext,
    t: usize,
    x: &[R],
    b: &[R],
    v: &[R],
    w: &[R],
    xi: &[R],
) -> Result<Vec<R>> {
    let filter = ctx
        .filter
        .as_ref()
        .ok_or_else(|| NiocError::InvalidInput("joint dynamics need the agent's filter".into()))?;
    let law = &ctx.law;
    let db: Vec<R> = b.iter().zip(law.x_nom[t].iter()).map(|(&bi, &xi)| bi - xi).collect();
    let lb = mat_vec(&law.gains[t], &db);
    let cxi = mat_vec(&law.noise_factors[t], xi);
    let u: Vec<R> = (0..lb.len())
        .map(|i| lb[i] + law.offsets[t][i] + law.u_nom[t][i] - cxi[i])
        .collect();
    let sys = &model.system;
    let zero_v = vec![R::zero(); v.len()];
    let zero_w = vec![R::zero(); w.len()];
    let x_next = sys.dynamics(x, &u, v);
    let pred = sys.dynamics(b, &u, &zero_v);
    let y = sys.observe(x, w);
    let y_hat = sys.observe(b, &zero_w);
    let innov: Vec<R> = y.iter().zip(&y_hat).map(|(&a, &c)| a - c).collect();
    let corr = mat_vec(&filter.gains[t], &innov);
    let mut out = x_next;
    out.extend(pred.iter().zip(&corr).map(|(&p, &c)| p + c));
    Ok(out)
}

/// Propagate the belief distribution one step through the joint dynamics,
/// linearized at (x_t, μ_b, 0, 0, 0).
pub fn joint_step<S: System>(
    model: &PomdpModel<S>,
    ctx: &LinearizationContext,
    t: usize,
    x: &DVector<f64>,
    belief: &BeliefTrack,
) -> Result<JointStep> {
    let filter = ctx
        .filter
        .as_ref()
        .ok_or_else(|| NiocError::InvalidInput("joint step needs the agent's filter".into()))?;
    let d = model.dims();
    let n = d.n;
    let law = &ctx.law;
    let k = &filter.gains[t];
    let l = &law.gains[t];
    let c = &law.noise_factors[t];
    let u = law.mean_control(t, &belief.mean);

    let at_x = model.linearize_dynamics(x, &u);
    let at_b = model.linearize_dynamics(&belief.mean, &u);
    let obs_x = model.linearize_observation(x);
    let obs_b = model.linearize_observation(&belief.mean);

    let mean_x = at_x.value.clone();
    let mean_b = &at_b.value + k * (&obs_x.value - &obs_b.value);

    let mut j_b = DMatrix::zeros(2 * n, n);
    j_b.rows_mut(0, n).copy_from(&(&at_x.b * l));
    j_b.rows_mut(n, n)
        .copy_from(&(&at_b.a - k * &obs_b.h + &at_b.b * l));
    let mut j_v = DMatrix::zeros(2 * n, d.nv);
    j_v.rows_mut(0, n).copy_from(&at_x.f);
    let mut j_w = DMatrix::zeros(2 * n, d.nw);
    j_w.rows_mut(n, n).copy_from(&(k * &obs_x.g));
    let mut j_xi = DMatrix::zeros(2 * n, d.nu);
    j_xi.rows_mut(0, n).copy_from(&(-(&at_x.b * c)));
    j_xi.rows_mut(n, n).copy_from(&(-(&at_b.b * c)));

    let cov = symmetrize(
        &(&j_b * &belief.cov * j_b.transpose()
            + &j_v * j_v.transpose()
            + &j_w * j_w.transpose()
            + &j_xi * j_xi.transpose()),
    );
    if cov.iter().chain(mean_x.iter()).chain(mean_b.iter()).any(|v| !v.is_finite()) {
        return Err(NiocError::non_finite(format!("joint step {t}")));
    }
    let jb_s = &j_b * psd_factor(&belief.cov);
    let full_factor = concat_columns(&[&jb_s, &j_v, &j_w, &j_xi]);
    let x_factor = full_factor.rows(0, n).into_owned();

    let joint = GaussianJoint {
        mean_x,
        mean_b,
        cov_xx: cov.view((0, 0), (n, n)).into_owned(),
        cov_xb: cov.view((0, n), (n, n)).into_owned(),
        cov_bb: cov.view((n, n), (n, n)).into_owned(),
    };
    Ok(JointStep {
        joint,
        j_b,
        j_v,
        j_w,
        j_xi,
        x_factor,
    })
}
