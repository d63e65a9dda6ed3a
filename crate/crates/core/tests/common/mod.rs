//! Independent reference computations for linear-Gaussian problems.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nioc::envs::linear::LinearGaussian;

/// Finite-horizon discrete Riccati recursion for ½xᵀQx + ½uᵀRu with final
/// ½xᵀQ_f x. Returns (gains L_t, control curvatures R + BᵀP_{t+1}B).
pub fn riccati(sys: &LinearGaussian, steps: usize) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let (a, b) = (&sys.a, &sys.b);
    let mut p = sys.q_final.clone();
    let mut gains = vec![DMatrix::zeros(0, 0); steps];
    let mut curv = vec![DMatrix::zeros(0, 0); steps];
    for t in (0..steps).rev() {
        let s = &sys.r + b.transpose() * &p * b;
        let s_inv = s.clone().try_inverse().unwrap();
        let k = -&s_inv * b.transpose() * &p * a;
        p = &sys.q + a.transpose() * &p * a + a.transpose() * &p * b * &k;
        p = (&p + p.transpose()) * 0.5;
        gains[t] = k;
        curv[t] = s;
    }
    (gains, curv)
}

/// Stationary LQR gain by iterating the Riccati map to a fixed point.
pub fn stationary_gain(sys: &LinearGaussian) -> DMatrix<f64> {
    let (a, b) = (&sys.a, &sys.b);
    let mut p = sys.q.clone();
    let mut k = DMatrix::zeros(b.ncols(), a.nrows());
    for _ in 0..100_000 {
        let s = &sys.r + b.transpose() * &p * b;
        k = -s.try_inverse().unwrap() * b.transpose() * &p * a;
        let next = &sys.q + a.transpose() * &p * a + a.transpose() * &p * b * &k;
        let diff = (&next - &p).amax();
        p = (&next + next.transpose()) * 0.5;
        if diff < 1e-15 * p.amax() {
            break;
        }
    }
    k
}

/// Textbook one-step-ahead Kalman predictor: gains and predicted means for
/// given controls and observations.
pub fn kalman_predictor(
    sys: &LinearGaussian,
    p1: &DMatrix<f64>,
    b1: &DVector<f64>,
    us: &[DVector<f64>],
    ys: &[DVector<f64>],
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let (a, b, h) = (&sys.a, &sys.b, &sys.h);
    let q = &sys.f * sys.f.transpose();
    let r = &sys.g * sys.g.transpose();
    let mut p = p1.clone();
    let mut mean = b1.clone();
    let mut gains = Vec::new();
    let mut means = vec![mean.clone()];
    for (u, y) in us.iter().zip(ys) {
        let s = h * &p * h.transpose() + &r;
        let k = a * &p * h.transpose() * s.clone().try_inverse().unwrap();
        mean = a * &mean + b * u + &k * (y - h * &mean);
        p = a * &p * a.transpose() + &q - &k * s * k.transpose();
        gains.push(k);
        means.push(mean.clone());
    }
    (gains, means)
}

fn log_normal_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let chol = cov.clone().cholesky().expect("oracle covariance is positive definite");
    let r = x - mean;
    let z = chol.l().solve_lower_triangular(&r).unwrap();
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    -0.5 * (z.dot(&z) + logdet + d as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Exact log p(x_2..x_T | x_1) of a linear-Gaussian agent that acts on its
/// Kalman belief with u_t = L_t b_t − C_t ξ_t, b_1 ~ N(x_1, Σ_1).
///
/// All states are written as affine functions of the stacked exogenous
/// variables (b_1, ξ_t, v_t, w_t) and the density of the stacked x_2..x_T is
/// evaluated in one batch.
pub fn exact_partial_loglik(sys: &LinearGaussian, sigma1: &DMatrix<f64>, alpha: f64, xs: &[DVector<f64>]) -> f64 {
    let n = sys.a.nrows();
    let nu = sys.b.ncols();
    let nv = sys.f.ncols();
    let nw = sys.g.ncols();
    let steps = xs.len() - 1;
    let (gains, curv) = riccati(sys, steps);
    let (kgains, _) = {
        let dummy_u = vec![DVector::zeros(nu); steps];
        let dummy_y = vec![DVector::zeros(sys.h.nrows()); steps];
        kalman_predictor(sys, sigma1, &xs[0], &dummy_u, &dummy_y)
    };
    let dim_e = n + steps * (nu + nv + nw);
    // x_t = cx + dx·e and b_t = cb + db·e
    let mut cx = xs[0].clone();
    let mut dx = DMatrix::zeros(n, dim_e);
    let mut cb = xs[0].clone();
    let mut db = DMatrix::zeros(n, dim_e);
    db.view_mut((0, 0), (n, n)).copy_from(&sigma1.clone().cholesky().map(|c| c.l()).unwrap_or_else(|| {
        let e = sigma1.clone().symmetric_eigen();
        &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()))
    }));
    let mut mean_all = DVector::zeros(n * steps);
    let mut fac_all = DMatrix::zeros(n * steps, dim_e);
    for t in 0..steps {
        let off = n + t * (nu + nv + nw);
        let c = curv[t].clone().try_inverse().unwrap() * alpha;
        let chol_c = if alpha > 0.0 {
            c.cholesky().unwrap().l()
        } else {
            DMatrix::zeros(nu, nu)
        };
        // u = L b − C ξ
        let cu = &gains[t] * &cb;
        let mut du = &gains[t] * &db;
        {
            let mut block = du.view_mut((0, off), (nu, nu));
            block -= &chol_c;
        }
        let k = &kgains[t];
        // x' = A x + B u + F v
        let cx_next = &sys.a * &cx + &sys.b * &cu;
        let mut dx_next = &sys.a * &dx + &sys.b * &du;
        {
            let mut block = dx_next.view_mut((0, off + nu), (n, nv));
            block += &sys.f;
        }
        // b' = A b + B u + K (H x + G w − H b)
        let cb_next = &sys.a * &cb + &sys.b * &cu + k * (&sys.h * &cx - &sys.h * &cb);
        let mut db_next = &sys.a * &db + &sys.b * &du + k * (&sys.h * &dx - &sys.h * &db);
        {
            let mut block = db_next.view_mut((0, off + nu + nv), (n, nw));
            block += k * &sys.g;
        }
        mean_all.rows_mut(t * n, n).copy_from(&cx_next);
        fac_all.view_mut((t * n, 0), (n, dim_e)).copy_from(&dx_next);
        cx = cx_next;
        dx = dx_next;
        cb = cb_next;
        db = db_next;
    }
    let mut obs = DVector::zeros(n * steps);
    for t in 0..steps {
        obs.rows_mut(t * n, n).copy_from(&xs[t + 1]);
    }
    let cov = &fac_all * fac_all.transpose();
    log_normal_density(&obs, &mean_all, &cov)
}

/// Exact log p(x_2..x_T | x_1) of a fully observed agent u_t = L_t x_t − C_t ξ_t.
pub fn exact_full_loglik(sys: &LinearGaussian, alpha: f64, xs: &[DVector<f64>]) -> f64 {
    let steps = xs.len() - 1;
    let (gains, curv) = riccati(sys, steps);
    let mut total = 0.0;
    for t in 0..steps {
        let x = &xs[t];
        let mean = (&sys.a + &sys.b * &gains[t]) * x;
        let policy = curv[t].clone().try_inverse().unwrap() * alpha;
        let cov = &sys.f * sys.f.transpose() + &sys.b * policy * sys.b.transpose();
        total += log_normal_density(&xs[t + 1], &mean, &cov);
    }
    total
}
