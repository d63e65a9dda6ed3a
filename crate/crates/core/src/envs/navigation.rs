//! Walking towards a target: the agent steers its heading and accelerates
//! along it, observing range and bearing to the target.

use crate::math::real::Real;
use crate::model::{Dims, System};

pub const DT: f64 = 0.1;
pub const TARGET: [f64; 2] = [1.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Navigation {
    pub c_a: f64,
    pub c_v: f64,
    pub sigma_m: f64,
    pub sigma_o: f64,
    pub target: [f64; 2],
}

impl Navigation {
    /// Position (x, y), heading, speed.
    pub const START: [f64; 4] = [0.0, 0.0, 0.0, 0.0];
}

impl System for Navigation {
    fn dims(&self) -> Dims {
        Dims {
            n: 4,
            nu: 2,
            m: 3,
            nv: 2,
            nw: 3,
        }
    }

    fn dynamics<R: Real>(&self, x: &[R], u: &[R], v: &[R]) -> Vec<R> {
        let (heading, speed) = (x[2], x[3]);
        vec![
            x[0] + heading.cos() * speed * DT,
            x[1] + heading.sin() * speed * DT,
            x[2] + (u[0] + u[0] * v[0] * self.sigma_m) * DT,
            x[3] + (u[1] + u[1] * v[1] * self.sigma_m) * DT,
        ]
    }

    fn observe<R: Real>(&self, x: &[R], w: &[R]) -> Vec<R> {
        let dx = x[0] - self.target[0];
        let dy = x[1] - self.target[1];
        vec![
            (dx * dx + dy * dy).sqrt() + w[0] * self.sigma_o,
            dy.atan2(dx) + w[1] * self.sigma_o,
            x[3] + w[2] * self.sigma_o,
        ]
    }

    fn running_cost<R: Real>(&self, _x: &[R], u: &[R], _t: usize) -> R {
        (u[0] * u[0] + u[1] * u[1]) * self.c_a
    }

    fn final_cost<R: Real>(&self, x: &[R]) -> R {
        let dx = x[0] - self.target[0];
        let dy = x[1] - self.target[1];
        dx * dx + dy * dy + x[3] * self.c_v
    }
}
