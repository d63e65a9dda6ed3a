//! Light-dark domain: observation noise grows with the horizontal distance to
//! a light source at x₁ = 5.

use crate::math::real::Real;
use crate::model::{Dims, System};

pub const DT: f64 = 10.0;
pub const LIGHT_X: f64 = 5.0;
/// Scale of the signal-dependent motion noise.
pub const MOTION_NOISE: f64 = 0.1;
pub const START: [f64; 2] = [2.0, 2.0];
/// Variance of the agent's initial belief around the start.
pub const INITIAL_BELIEF_VAR: f64 = 1.0;
/// Lower optimizer bound of the light preference c.
pub const C_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LightDark {
    pub sigma: f64,
    pub c: f64,
    /// Horizontal target coordinate; the vertical one is 0.
    pub p: f64,
}

impl System for LightDark {
    fn dims(&self) -> Dims {
        Dims {
            n: 2,
            nu: 2,
            m: 2,
            nv: 2,
            nw: 2,
        }
    }

    fn dynamics<R: Real>(&self, x: &[R], u: &[R], v: &[R]) -> Vec<R> {
        vec![
            x[0] + u[0] * DT + u[0] * v[0] * MOTION_NOISE,
            x[1] + u[1] * DT + u[1] * v[1] * MOTION_NOISE,
        ]
    }

    fn observe<R: Real>(&self, x: &[R], w: &[R]) -> Vec<R> {
        let scale = (x[0] - LIGHT_X).abs() * self.sigma;
        vec![x[0] + scale * w[0], x[1] + scale * w[1]]
    }

    fn running_cost<R: Real>(&self, x: &[R], u: &[R], _t: usize) -> R {
        let d = x[0] - LIGHT_X;
        (u[0] * u[0] + u[1] * u[1]) * 0.5 + d * d * self.c
    }

    fn final_cost<R: Real>(&self, x: &[R]) -> R {
        let dx = x[0] - self.p;
        dx * dx + x[1] * x[1]
    }
}
