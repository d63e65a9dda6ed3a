use nalgebra::{DMatrix, DVector};

use crate::model::{PomdpModel, System};

pub const GN_MAX_ITER: usize = 50;
const GRAD_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const DAMPING_START: f64 = 1e-6;
const DAMPING_MAX: f64 = 1e6;
const DAMPING_MIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEstimate {
    pub controls: Vec<DVector<f64>>,
    /// Steps that hit the iteration cap or the damping limit.
    pub unconverged: Vec<usize>,
}

/// Least-squares controls `argmin_u ‖x_{t+1} − f(x_t, u, 0)‖²`, independently
/// per step, by damped Gauss-Newton from u = 0.
pub fn estimate_controls<S: System>(model: &PomdpModel<S>, xs: &[DVector<f64>]) -> ControlEstimate {
    let nu = model.dims().nu;
    let mut controls = Vec::with_capacity(xs.len().saturating_sub(1));
    let mut unconverged = Vec::new();
    for t in 0..xs.len().saturating_sub(1) {
        let (u, ok) = estimate_step(model, &xs[t], &xs[t + 1], nu);
        if !ok {
            unconverged.push(t);
        }
        controls.push(u);
    }
    ControlEstimate { controls, unconverged }
}

fn estimate_step<S: System>(model: &PomdpModel<S>, x: &DVector<f64>, x_next: &DVector<f64>, nu: usize) -> (DVector<f64>, bool) {
    let mut u = DVector::zeros(nu);
    let mut lambda = DAMPING_START;
    let mut lin = model.linearize_dynamics(x, &u);
    let mut r = x_next - &lin.value;
    let mut sq = r.norm_squared();
    for _ in 0..GN_MAX_ITER {
        let b = &lin.b;
        let g = b.transpose() * &r;
        if g.norm() < GRAD_TOL {
            return (u, true);
        }
        let btb = b.transpose() * b;
        loop {
            let lhs = &btb + DMatrix::identity(nu, nu) * lambda;
            let Some(step) = lhs.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                if lambda > DAMPING_MAX {
                    return (u, false);
                }
                continue;
            };
            if step.norm() < STEP_TOL {
                return (u, true);
            }
            let trial = &u + &step;
            let trial_lin = model.linearize_dynamics(x, &trial);
            let trial_r = x_next - &trial_lin.value;
            let trial_sq = trial_r.norm_squared();
            if trial_sq.is_finite() && trial_sq < sq {
                u = trial;
                lin = trial_lin;
                r = trial_r;
                sq = trial_sq;
                lambda = (lambda / 10.0).max(DAMPING_MIN);
                break;
            }
            lambda *= 10.0;
            if lambda > DAMPING_MAX {
                return (u, false);
            }
        }
    }
    (u, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::linear::LinearGaussian;
    use crate::model::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn invertible_linear_input_is_solved_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sys = LinearGaussian::random(&mut rng, 3, 3, 1);
        sys.b = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, -0.3, 0.8, 0.1, 0.0, 0.4, 1.2]);
        let model = PomdpModel::new(sys.clone(), Variant::Full, 3, DVector::zeros(3), 0.0);
        let xs = vec![
            DVector::from_vec(vec![0.1, 0.2, 0.3]),
            DVector::from_vec(vec![1.0, -1.0, 0.5]),
            DVector::from_vec(vec![0.0, 0.4, -0.2]),
        ];
        let est = estimate_controls(&model, &xs);
        assert!(est.unconverged.is_empty());
        let b_inv = sys.b.clone().try_inverse().unwrap();
        for t in 0..2 {
            let want = &b_inv * (&xs[t + 1] - &sys.a * &xs[t]);
            assert!((&est.controls[t] - &want).amax() < 1e-9, "{} vs {}", est.controls[t], want);
        }
    }

    #[test]
    fn passive_step_gives_zero_control() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = LinearGaussian::random(&mut rng, 2, 1, 1);
        let model = PomdpModel::new(sys.clone(), Variant::Full, 2, DVector::zeros(2), 0.0);
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let xs = vec![x.clone(), &sys.a * &x];
        let est = estimate_controls(&model, &xs);
        assert_eq!(est.controls[0], DVector::zeros(1));
    }
}
