//! Planar two-link arm moving the hand to one of eight radial targets.
//!
//! Rigid-body constants are those of the classic two-joint arm model used in
//! the iterative LQG literature: M(q)q̈ + C(q, q̇) + B q̇ = τ with joint torques
//! τ as controls. Hand positions in the cost are measured in centimetres so
//! that the target error is on the scale of the effort term.

use crate::math::real::Real;
use crate::model::{Dims, System};

pub const DT: f64 = 0.01;
pub const L1: f64 = 0.30;
pub const L2: f64 = 0.33;
const M2: f64 = 1.1;
const S2: f64 = 0.16;
const I1: f64 = 0.025;
const I2: f64 = 0.045;
const A1: f64 = I1 + I2 + M2 * L1 * L1;
const A2: f64 = M2 * L1 * S2;
const A3: f64 = I2;
/// Viscous joint friction matrix.
const FRICTION: [[f64; 2]; 2] = [[0.05, 0.025], [0.025, 0.05]];
/// Metres to cost units.
pub const COST_SCALE: f64 = 100.0;
pub const TARGET_DISTANCE: f64 = 0.1;
pub const N_TARGETS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Reaching {
    pub c_a: f64,
    pub c_v: f64,
    pub sigma_m: f64,
    pub sigma_o: f64,
    /// Hand target in metres.
    pub target: [f64; 2],
}

/// Hand position for joint angles (shoulder, elbow).
pub fn forward_kinematics<R: Real>(q: &[R]) -> [R; 2] {
    let q12 = q[0] + q[1];
    [
        q[0].cos() * L1 + q12.cos() * L2,
        q[0].sin() * L1 + q12.sin() * L2,
    ]
}

/// Hand velocity for state (q1, q2, q̇1, q̇2).
pub fn hand_velocity<R: Real>(x: &[R]) -> [R; 2] {
    let q12 = x[0] + x[1];
    let (s1, c1) = (x[0].sin(), x[0].cos());
    let (s12, c12) = (q12.sin(), q12.cos());
    let w12 = x[2] + x[3];
    [
        -(s1 * x[2] * L1 + s12 * w12 * L2),
        c1 * x[2] * L1 + c12 * w12 * L2,
    ]
}

impl Reaching {
    /// Start posture (shoulder, elbow) in radians.
    pub const START_ANGLES: [f64; 2] = [std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2];

    pub fn start_state() -> [f64; 4] {
        [Self::START_ANGLES[0], Self::START_ANGLES[1], 0.0, 0.0]
    }

    /// Targets on a circle around the start hand position, index 0 to the
    /// right and proceeding counter-clockwise.
    pub fn target(index: usize) -> [f64; 2] {
        let e0 = forward_kinematics(&Self::START_ANGLES);
        let phi = 2.0 * std::f64::consts::PI * (index % N_TARGETS) as f64 / N_TARGETS as f64;
        [
            e0[0] + TARGET_DISTANCE * phi.cos(),
            e0[1] + TARGET_DISTANCE * phi.sin(),
        ]
    }

    /// Joint accelerations for torques `tau`.
    fn accelerations<R: Real>(x: &[R], tau: [R; 2]) -> [R; 2] {
        let (s2, c2) = (x[1].sin(), x[1].cos());
        let m11 = c2 * (2.0 * A2) + A1;
        let m12 = c2 * A2 + A3;
        let m22 = R::cst(A3);
        let (qd1, qd2) = (x[2], x[3]);
        let cor1 = -(s2 * A2) * qd2 * (qd1 * 2.0 + qd2);
        let cor2 = s2 * A2 * qd1 * qd1;
        let r1 = tau[0] - cor1 - (qd1 * FRICTION[0][0] + qd2 * FRICTION[0][1]);
        let r2 = tau[1] - cor2 - (qd1 * FRICTION[1][0] + qd2 * FRICTION[1][1]);
        let det = m11 * m22 - m12 * m12;
        [(m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det]
    }
}

impl System for Reaching {
    fn dims(&self) -> Dims {
        Dims {
            n: 4,
            nu: 2,
            m: 4,
            nv: 2,
            nw: 4,
        }
    }

    fn dynamics<R: Real>(&self, x: &[R], u: &[R], v: &[R]) -> Vec<R> {
        // signal-dependent torque noise, standard deviation σ_m·|u_i|
        let tau = [
            u[0] + u[0] * v[0] * self.sigma_m,
            u[1] + u[1] * v[1] * self.sigma_m,
        ];
        let acc = Self::accelerations(x, tau);
        vec![
            x[0] + x[2] * DT,
            x[1] + x[3] * DT,
            x[2] + acc[0] * DT,
            x[3] + acc[1] * DT,
        ]
    }

    fn observe<R: Real>(&self, x: &[R], w: &[R]) -> Vec<R> {
        x.iter().zip(w).map(|(&xi, &wi)| xi + wi * self.sigma_o).collect()
    }

    fn running_cost<R: Real>(&self, _x: &[R], u: &[R], _t: usize) -> R {
        (u[0] * u[0] + u[1] * u[1]) * self.c_a
    }

    fn final_cost<R: Real>(&self, x: &[R]) -> R {
        let e = forward_kinematics(x);
        let ed = hand_velocity(x);
        let dx = (e[0] - self.target[0]) * COST_SCALE;
        let dy = (e[1] - self.target[1]) * COST_SCALE;
        let vx = ed[0] * COST_SCALE;
        let vy = ed[1] * COST_SCALE;
        dx * dx + dy * dy + (vx * vx + vy * vy) * self.c_v
    }
}
