//! Cart pole that must move the cart from x = 0 to x = 1 while keeping the
//! pole upright. Physical constants follow the gym environment.

use crate::math::real::Real;
use crate::model::{Dims, System};

use super::rk4;

pub const DT: f64 = 0.02;
const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
/// Half the pole length.
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
/// Weight of the final position and angle errors.
pub const GOAL_WEIGHT: f64 = 100.0;
pub const GOAL_POSITION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CartPole {
    pub c_a: f64,
    pub c_v: f64,
    pub sigma_m: f64,
    pub sigma_o: f64,
}

/// Cart and pole accelerations for state (x, ẋ, θ, θ̇) and force `u`.
pub fn accelerations<R: Real>(s: &[R], u: R) -> (R, R) {
    let (sin, cos) = (s[2].sin(), s[2].cos());
    let temp = (u + s[3] * s[3] * sin * POLE_MASS_LENGTH) / TOTAL_MASS;
    let theta_acc = (sin * GRAVITY - cos * temp)
        / ((R::cst(4.0 / 3.0) - cos * cos * (MASS_POLE / TOTAL_MASS)) * HALF_LENGTH);
    let x_acc = temp - theta_acc * cos * (POLE_MASS_LENGTH / TOTAL_MASS);
    (x_acc, theta_acc)
}

impl CartPole {
    pub const START: [f64; 4] = [0.0, 0.0, 0.0, 0.0];

    fn deriv<R: Real>(s: &[R], u: R) -> Vec<R> {
        let (xa, ta) = accelerations(s, u);
        vec![s[1], xa, s[3], ta]
    }

    /// Total mechanical energy (kinetic plus pole potential).
    pub fn energy(s: &[f64]) -> f64 {
        let (xd, th, thd) = (s[1], s[2], s[3]);
        let l = HALF_LENGTH;
        // pole centre of mass velocity
        let vx = xd + l * thd * th.cos();
        let vy = -l * thd * th.sin();
        let inertia = MASS_POLE * (2.0 * l) * (2.0 * l) / 12.0;
        0.5 * MASS_CART * xd * xd
            + 0.5 * MASS_POLE * (vx * vx + vy * vy)
            + 0.5 * inertia * thd * thd
            + MASS_POLE * GRAVITY * l * th.cos()
    }
}

impl System for CartPole {
    fn dims(&self) -> Dims {
        Dims {
            n: 4,
            nu: 1,
            m: 4,
            nv: 1,
            nw: 4,
        }
    }

    fn dynamics<R: Real>(&self, x: &[R], u: &[R], v: &[R]) -> Vec<R> {
        let mut next = rk4(|s: &[R]| Self::deriv(s, u[0]), x, DT);
        // force noise σ_m·u·v; accelerations are affine in the force, so the
        // increment is exactly linear in v
        let (xa0, ta0) = accelerations(x, u[0]);
        let (xa1, ta1) = accelerations(x, u[0] + u[0] * v[0] * self.sigma_m);
        next[1] = next[1] + (xa1 - xa0) * DT;
        next[3] = next[3] + (ta1 - ta0) * DT;
        next
    }

    fn observe<R: Real>(&self, x: &[R], w: &[R]) -> Vec<R> {
        x.iter().zip(w).map(|(&xi, &wi)| xi + wi * self.sigma_o).collect()
    }

    fn running_cost<R: Real>(&self, _x: &[R], u: &[R], _t: usize) -> R {
        u[0] * u[0] * self.c_a
    }

    fn final_cost<R: Real>(&self, x: &[R]) -> R {
        let dx = x[0] - GOAL_POSITION;
        (dx * dx + x[2] * x[2]) * GOAL_WEIGHT + (x[1] * x[1] + x[3] * x[3]) * self.c_v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp() -> CartPole {
        CartPole {
            c_a: 0.1,
            c_v: 0.1,
            sigma_m: 0.3,
            sigma_o: 1.0,
        }
    }

    #[test]
    fn upright_rest_is_stationary() {
        let next = cp().dynamics(&CartPole::START, &[0.0], &[0.0]);
        assert!(next[2].abs() < 1e-12);
        assert!(next[3].abs() < 1e-12);
    }

    #[test]
    fn final_cost_contains_goal_distance() {
        let sys = cp();
        let at_start = sys.final_cost(&[0.0, 0.0, 0.0, 0.0]);
        assert!((at_start - GOAL_WEIGHT).abs() < 1e-12);
        assert_eq!(sys.final_cost(&[1.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn noise_is_affine_in_v() {
        let sys = cp();
        let x = [0.2, -0.1, 0.3, 0.5];
        let f0 = sys.dynamics(&x, &[1.5], &[0.0]);
        let f1 = sys.dynamics(&x, &[1.5], &[1.0]);
        let f2 = sys.dynamics(&x, &[1.5], &[2.0]);
        for i in 0..4 {
            assert!(((f2[i] - f0[i]) - 2.0 * (f1[i] - f0[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_drift_below_one_percent_over_horizon() {
        let sys = cp();
        let mut x = vec![0.0, 0.0, 2.5, 0.0];
        let e0 = CartPole::energy(&x);
        for _ in 0..50 {
            x = sys.dynamics(&x, &[0.0], &[0.0]);
        }
        assert!(((CartPole::energy(&x) - e0) / e0).abs() < 0.01);
    }
}
