//! Torque-controlled pendulum that must swing up from hanging down.
//!
//! Angle convention as in the gym environment: θ = 0 is upright, θ = π is
//! hanging, θ̈ = 3g/(2l)·sin θ + 3/(ml²)·u with g = 10, l = 1, m = 1.

use crate::math::real::Real;
use crate::model::{Dims, System};

use super::rk4;

pub const DT: f64 = 0.05;
const GRAVITY_TERM: f64 = 15.0;
const TORQUE_GAIN: f64 = 3.0;
/// Weight of the final angle penalty (1 − cos θ).
pub const ANGLE_WEIGHT: f64 = 100.0;
/// Scale of the observation noise when σ_o is not a free parameter.
/// Constant torque of the first nominal trajectory.
pub const INITIAL_TORQUE: f64 = 0.5;
pub const DEFAULT_OBS_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub c_a: f64,
    pub c_v: f64,
    pub sigma_m: f64,
    pub sigma_o: f64,
}

impl Pendulum {
    pub const START: [f64; 2] = [std::f64::consts::PI, 0.0];

    fn deriv<R: Real>(s: &[R], u: R) -> Vec<R> {
        vec![s[1], s[0].sin() * GRAVITY_TERM + u * TORQUE_GAIN]
    }

    /// Mechanical energy per unit inertia: ½θ̇² + 15 cos θ.
    pub fn energy(x: &[f64]) -> f64 {
        0.5 * x[1] * x[1] + GRAVITY_TERM * x[0].cos()
    }
}

impl System for Pendulum {
    fn dims(&self) -> Dims {
        Dims {
            n: 2,
            nu: 1,
            m: 3,
            nv: 1,
            nw: 3,
        }
    }

    fn dynamics<R: Real>(&self, x: &[R], u: &[R], v: &[R]) -> Vec<R> {
        let mut next = rk4(|s: &[R]| Self::deriv(s, u[0]), x, DT);
        // torque noise with standard deviation σ_m·|u|, applied as an impulse
        next[1] = next[1] + u[0] * v[0] * (DT * TORQUE_GAIN * self.sigma_m);
        next
    }

    fn observe<R: Real>(&self, x: &[R], w: &[R]) -> Vec<R> {
        vec![
            x[0].sin() + w[0] * self.sigma_o,
            x[0].cos() + w[1] * self.sigma_o,
            x[1] + w[2] * self.sigma_o,
        ]
    }

    fn running_cost<R: Real>(&self, _x: &[R], u: &[R], _t: usize) -> R {
        u[0] * u[0] * self.c_a
    }

    fn final_cost<R: Real>(&self, x: &[R]) -> R {
        (R::cst(1.0) - x[0].cos()) * ANGLE_WEIGHT + x[1] * x[1] * self.c_v
    }

    // the hanging rest state is a stationary point of the swing-up problem
    fn initial_control(&self) -> Vec<f64> {
        vec![INITIAL_TORQUE]
    }
}
