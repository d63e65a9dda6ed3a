//! The agent's side of the problem: iLQG control laws, the extended Kalman
//! filter along a nominal trajectory, the maximum-entropy Gaussian policy and
//! closed-loop simulation.

mod backward;
mod filter;
mod ilqg;
mod simulate;

use nalgebra::{DMatrix, DVector};

pub use backward::{backward_pass, QUU_FLOOR, VALUE_NORM_LIMIT};
pub use filter::{ekf_step, filter_pass};
pub use ilqg::{expected_cost, ilqg_solve, Solution};
pub use simulate::{mce_policy_sample, mix_seed, simulate, simulate_trajectory};

/// Time-varying affine feedback law around a nominal trajectory, together
/// with the curvature needed for the maximum-entropy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw {
    /// Feedback gains L_t, one per control step.
    pub gains: Vec<DMatrix<f64>>,
    /// Open-loop corrections m_t.
    pub offsets: Vec<DVector<f64>>,
    /// Regularized control Hessians Quu_t.
    pub quu: Vec<DMatrix<f64>>,
    /// Lower Cholesky factors C_t of the policy covariance α·Quu_t⁻¹.
    pub noise_factors: Vec<DMatrix<f64>>,
    /// Nominal states x̄_1..x̄_T.
    pub x_nom: Vec<DVector<f64>>,
    /// Nominal controls ū_1..ū_{T−1}.
    pub u_nom: Vec<DVector<f64>>,
    pub alpha: f64,
    /// Value Hessians V_t for t = 1..T (the last one from the final cost).
    pub value_hessians: Vec<DMatrix<f64>>,
    /// Weights W_t of the estimation-error cost, present when the law was
    /// computed with the information term.
    pub error_weights: Option<Vec<DMatrix<f64>>>,
}

impl ControlLaw {
    /// Number of control steps.
    pub fn steps(&self) -> usize {
        self.gains.len()
    }

    /// Policy mean L_t(b − x̄_t) + m_t + ū_t.
    pub fn mean_control(&self, t: usize, b: &DVector<f64>) -> DVector<f64> {
        &self.gains[t] * (b - &self.x_nom[t]) + &self.offsets[t] + &self.u_nom[t]
    }

    /// Policy covariance α·Quu_t⁻¹.
    pub fn policy_cov(&self, t: usize) -> DMatrix<f64> {
        let c = &self.noise_factors[t];
        c * c.transpose()
    }
}

/// Kalman gains and predicted covariances of the agent's filter along a
/// nominal trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterGains {
    /// K_t for t = 1..T−1.
    pub gains: Vec<DMatrix<f64>>,
    /// Predicted covariances P_1..P_T of the estimation error x_t − b_t.
    pub covs: Vec<DMatrix<f64>>,
    /// Error transitions A_t − K_t H_t.
    pub transitions: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub max_iter: usize,
    /// Convergence threshold on max |x̄_new − x̄|.
    pub tol: f64,
    /// Number of backtracking steps: m is scaled by 1, ½, …, 2^−(n−1).
    pub line_search_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            line_search_steps: 11,
        }
    }
}
