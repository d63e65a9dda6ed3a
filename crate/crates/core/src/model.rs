//! The parameterized POMDP abstraction shared by solvers and likelihoods.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{NiocError, Result};
use crate::math::ad;
use crate::math::real::{Dual, HyperDual, Real};

/// Dimensions of state, control, observation and the two noise inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub nu: usize,
    pub m: usize,
    pub nv: usize,
    pub nw: usize,
}

/// A stochastic dynamical system with costs, written once over [`Real`].
///
/// Noise enters through standard-normal `v` (dynamics) and `w` (observation);
/// `v = 0`, `w = 0` must give the noiseless path.
pub trait System: Send + Sync {
    fn dims(&self) -> Dims;
    fn dynamics<R: Real>(&self, x: &[R], u: &[R], v: &[R]) -> Vec<R>;
    fn observe<R: Real>(&self, x: &[R], w: &[R]) -> Vec<R>;
    fn running_cost<R: Real>(&self, x: &[R], u: &[R], t: usize) -> R;
    fn final_cost<R: Real>(&self, x: &[R]) -> R;

    /// Constant control used to seed trajectory optimization.
    fn initial_control(&self) -> Vec<f64> {
        vec![0.0; self.dims().nu]
    }
}

/// How the agent perceives the state and which controller it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// The agent observes the state directly.
    #[serde(rename = "full")]
    Full,
    /// Noisy observations, EKF beliefs, and a controller that accounts for
    /// the cost of estimation error.
    #[serde(rename = "partial")]
    Partial,
    /// Noisy observations and EKF beliefs, but the controller is the fully
    /// observable one applied to the belief mean.
    #[serde(rename = "partial-fo")]
    PartialFo,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Partial => "partial",
            Variant::PartialFo => "partial-fo",
        }
    }

    pub fn is_partial(self) -> bool {
        !matches!(self, Variant::Full)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = NiocError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "partial" => Ok(Variant::Partial),
            "partial-fo" => Ok(Variant::PartialFo),
            other => Err(NiocError::InvalidInput(format!(
                "unknown variant '{other}' (expected full, partial or partial-fo)"
            ))),
        }
    }
}

/// A system bound to horizon, start state, initial belief and temperature.
#[derive(Debug, Clone)]
pub struct PomdpModel<S> {
    pub system: S,
    pub variant: Variant,
    /// Number of states T in a trajectory; there are T−1 controls.
    pub horizon: usize,
    pub x1: DVector<f64>,
    /// Covariance of the agent's initial belief mean around `x1`; also the
    /// agent's own initial filter covariance.
    pub belief_cov: DMatrix<f64>,
    /// Temperature of the maximum-entropy policy: covariance α·Quu⁻¹.
    pub alpha: f64,
}

/// Default initial belief covariance scale.
pub const DEFAULT_BELIEF_VAR: f64 = 1e-4;

/// First-order model of the dynamics at a point.
#[derive(Debug, Clone)]
pub struct DynamicsLinearization {
    pub value: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Noise input matrix ∂f/∂v.
    pub f: DMatrix<f64>,
}

/// First-order model of the observation at a point.
#[derive(Debug, Clone)]
pub struct ObservationLinearization {
    pub value: DVector<f64>,
    pub h: DMatrix<f64>,
    /// Noise input matrix ∂h/∂w.
    pub g: DMatrix<f64>,
}

/// Second-order model of a scalar cost.
#[derive(Debug, Clone)]
pub struct CostQuadratic {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

fn to_vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

impl<S: System> PomdpModel<S> {
    pub fn new(system: S, variant: Variant, horizon: usize, x1: DVector<f64>, alpha: f64) -> Self {
        let n = x1.len();
        Self {
            system,
            variant,
            horizon,
            x1,
            belief_cov: DMatrix::identity(n, n) * DEFAULT_BELIEF_VAR,
            alpha,
        }
    }

    pub fn dims(&self) -> Dims {
        self.system.dims()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        to_vec(&self.system.dynamics(x.as_slice(), u.as_slice(), v.as_slice()))
    }

    pub fn step_mean(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let v = DVector::zeros(self.dims().nv);
        self.step(x, u, &v)
    }

    pub fn observe(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        to_vec(&self.system.observe(x.as_slice(), w.as_slice()))
    }

    pub fn observe_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        let w = DVector::zeros(self.dims().nw);
        self.observe(x, &w)
    }

    /// Jacobians of f with respect to x, u and v at `(x, u, 0)`.
    pub fn linearize_dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DynamicsLinearization {
        let d = self.dims();
        let mut point = Vec::with_capacity(d.n + d.nu + d.nv);
        point.extend_from_slice(x.as_slice());
        point.extend_from_slice(u.as_slice());
        point.extend(std::iter::repeat_n(0.0, d.nv));
        let (value, jac) = ad::jacobian(
            |z: &[Dual]| {
                self.system
                    .dynamics(&z[..d.n], &z[d.n..d.n + d.nu], &z[d.n + d.nu..])
            },
            &point,
        );
        DynamicsLinearization {
            value,
            a: jac.columns(0, d.n).into_owned(),
            b: jac.columns(d.n, d.nu).into_owned(),
            f: jac.columns(d.n + d.nu, d.nv).into_owned(),
        }
    }

    /// Jacobians of h with respect to x and w at `(x, 0)`.
    pub fn linearize_observation(&self, x: &DVector<f64>) -> ObservationLinearization {
        let d = self.dims();
        let mut point = Vec::with_capacity(d.n + d.nw);
        point.extend_from_slice(x.as_slice());
        point.extend(std::iter::repeat_n(0.0, d.nw));
        let (value, jac) = ad::jacobian(
            |z: &[Dual]| self.system.observe(&z[..d.n], &z[d.n..]),
            &point,
        );
        ObservationLinearization {
            value,
            h: jac.columns(0, d.n).into_owned(),
            g: jac.columns(d.n, d.nw).into_owned(),
        }
    }

    /// Derivatives of each noise column ∂f/∂v_i with respect to z = (x, u).
    ///
    /// Entry i is the n × (n+nu) matrix ∂²f/∂v_i∂z.
    pub fn dynamics_noise_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let d = self.dims();
        let nz = d.n + d.nu;
        let mut args: Vec<HyperDual> = x
            .iter()
            .chain(u.iter())
            .copied()
            .chain(std::iter::repeat_n(0.0, d.nv))
            .map(HyperDual::cst)
            .collect();
        let mut out = Vec::with_capacity(d.nv);
        for i in 0..d.nv {
            let mut m = DMatrix::zeros(d.n, nz);
            args[nz + i].e1 = 1.0;
            for j in 0..nz {
                args[j].e2 = 1.0;
                let y = self.system.dynamics(&args[..d.n], &args[d.n..nz], &args[nz..]);
                args[j].e2 = 0.0;
                for (r, val) in y.iter().enumerate() {
                    m[(r, j)] = val.e12;
                }
            }
            args[nz + i].e1 = 0.0;
            out.push(m);
        }
        out
    }

    /// Derivatives of each observation-noise column ∂h/∂w_j with respect to x.
    pub fn observation_noise_derivatives(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let d = self.dims();
        let mut args: Vec<HyperDual> = x
            .iter()
            .copied()
            .chain(std::iter::repeat_n(0.0, d.nw))
            .map(HyperDual::cst)
            .collect();
        let mut out = Vec::with_capacity(d.nw);
        for i in 0..d.nw {
            let mut m = DMatrix::zeros(d.m, d.n);
            args[d.n + i].e1 = 1.0;
            for j in 0..d.n {
                args[j].e2 = 1.0;
                let y = self.system.observe(&args[..d.n], &args[d.n..]);
                args[j].e2 = 0.0;
                for (r, val) in y.iter().enumerate() {
                    m[(r, j)] = val.e12;
                }
            }
            args[d.n + i].e1 = 0.0;
            out.push(m);
        }
        out
    }

    /// Value, gradient and Hessian of the running cost in z = (x, u).
    pub fn quadratize_running(&self, x: &DVector<f64>, u: &DVector<f64>, t: usize) -> CostQuadratic {
        let n = x.len();
        let point: Vec<f64> = x.iter().chain(u.iter()).copied().collect();
        let (value, grad, hess) = ad::gradient_hessian(
            |z: &[HyperDual]| self.system.running_cost(&z[..n], &z[n..], t),
            &point,
        );
        CostQuadratic { value, grad, hess }
    }

    pub fn quadratize_final(&self, x: &DVector<f64>) -> CostQuadratic {
        let (value, grad, hess) =
            ad::gradient_hessian(|z: &[HyperDual]| self.system.final_cost(z), x.as_slice());
        CostQuadratic { value, grad, hess }
    }

    pub fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: usize) -> f64 {
        self.system.running_cost(x.as_slice(), u.as_slice(), t)
    }

    pub fn final_cost(&self, x: &DVector<f64>) -> f64 {
        self.system.final_cost(x.as_slice())
    }

    /// Total deterministic cost of a state/control sequence.
    pub fn trajectory_cost(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
        let running: f64 = us
            .iter()
            .enumerate()
            .map(|(t, u)| self.running_cost(&xs[t], u, t))
            .sum();
        running + self.final_cost(xs.last().expect("trajectory has at least one state"))
    }

    /// Noiseless open-loop rollout from `x1`.
    pub fn rollout(&self, us: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut xs = Vec::with_capacity(us.len() + 1);
        xs.push(self.x1.clone());
        for u in us {
            let next = self.step_mean(xs.last().unwrap(), u);
            xs.push(next);
        }
        xs
    }
}

/// Builds models from parameter vectors.
pub trait ModelFactory: Sync {
    type Sys: System;

    fn param_specs(&self) -> Vec<ParamSpec>;

    fn build(&self, theta: &ParamVector) -> Result<PomdpModel<Self::Sys>>;

    /// Whether f(x, u, 0) changes with θ. When it does not, estimated
    /// controls can be shared across likelihood evaluations.
    fn mean_dynamics_depend_on_theta(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    Positive,
    Unconstrained,
}

/// Declaration of one named model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub constraint: Constraint,
    pub default: f64,
    /// Sampling range; log-uniform for positive, uniform otherwise.
    pub range: (f64, f64),
    /// Smallest value the optimizer may reach, when it should go below the
    /// default of range.0 / 100.
    pub floor: Option<f64>,
}

impl ParamSpec {
    pub fn positive(name: &'static str, default: f64, range: (f64, f64)) -> Self {
        Self {
            name,
            constraint: Constraint::Positive,
            default,
            range,
            floor: None,
        }
    }

    pub fn unconstrained(name: &'static str, default: f64, range: (f64, f64)) -> Self {
        Self {
            name,
            constraint: Constraint::Unconstrained,
            default,
            range,
            floor: None,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = Some(floor);
        self
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.range;
        match self.constraint {
            Constraint::Positive => rng.gen_range(lo.ln()..hi.ln()).exp(),
            Constraint::Unconstrained => rng.gen_range(lo..hi),
        }
    }

    /// Box bounds in optimizer space.
    pub fn optimizer_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.range;
        match self.constraint {
            Constraint::Positive => (self.floor.unwrap_or(lo / 100.0).ln(), (hi * 100.0).ln()),
            Constraint::Unconstrained => {
                let w = hi - lo;
                (self.floor.unwrap_or(lo - 2.0 * w), hi + 2.0 * w)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: f64,
    pub constraint: Constraint,
}

/// Ordered, name-indexed parameter vector θ.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    entries: Vec<ParamEntry>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64, constraint: Constraint) -> Self {
        self.set_or_push(name, value, constraint);
        self
    }

    fn set_or_push(&mut self, name: &str, value: f64, constraint: Constraint) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.name == name) {
            e.value = value;
            e.constraint = constraint;
        } else {
            self.entries.push(ParamEntry {
                name: name.to_string(),
                value,
                constraint,
            });
        }
    }

    /// Defaults of every spec, in spec order.
    pub fn defaults(specs: &[ParamSpec]) -> Self {
        let mut p = Self::new();
        for s in specs {
            p.set_or_push(s.name, s.default, s.constraint);
        }
        p
    }

    /// One draw from the sampling ranges of `specs`.
    pub fn sample<R: Rng + ?Sized>(specs: &[ParamSpec], rng: &mut R) -> Self {
        let mut p = Self::new();
        for s in specs {
            p.set_or_push(s.name, s.sample(rng), s.constraint);
        }
        p
    }

    /// Orders and types `values` by `specs`; every spec must be present.
    pub fn from_named(specs: &[ParamSpec], values: &[(String, f64)]) -> Result<Self> {
        let mut p = Self::new();
        for s in specs {
            let v = values
                .iter()
                .find(|(n, _)| n == s.name)
                .map(|(_, v)| *v)
                .ok_or_else(|| NiocError::MissingParameter(s.name.to_string()))?;
            p.set_or_push(s.name, v, s.constraint);
        }
        for (name, _) in values {
            if !specs.iter().any(|s| s.name == name) {
                return Err(NiocError::InvalidInput(format!("unknown parameter '{name}'")));
            }
        }
        Ok(p)
    }

    /// Replaces values of the named entries; names must already exist.
    pub fn overridden(&self, values: &[(String, f64)]) -> Result<Self> {
        let mut p = self.clone();
        for (name, v) in values {
            let e = p
                .entries
                .iter_mut()
                .find(|e| &e.name == name)
                .ok_or_else(|| NiocError::InvalidInput(format!("unknown parameter '{name}'")))?;
            e.value = *v;
        }
        Ok(p)
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.value)
            .ok_or_else(|| NiocError::MissingParameter(name.to_string()))
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn named_values(&self) -> Vec<(String, f64)> {
        self.entries.iter().map(|e| (e.name.clone(), e.value)).collect()
    }

    /// Natural log for positive entries, identity otherwise.
    pub fn to_optimizer_space(&self) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            out[i] = match e.constraint {
                Constraint::Positive => {
                    if !(e.value > 0.0) {
                        return Err(NiocError::NonPositiveParameter {
                            name: e.name.clone(),
                            value: e.value,
                        });
                    }
                    e.value.ln()
                }
                Constraint::Unconstrained => e.value,
            };
        }
        Ok(out)
    }

    /// Inverse of [`to_optimizer_space`](Self::to_optimizer_space), keeping
    /// names and constraints of `self`.
    pub fn from_optimizer_space(&self, z: &DVector<f64>) -> Result<Self> {
        if z.len() != self.entries.len() {
            return Err(NiocError::DimensionMismatch(format!(
                "optimizer vector has length {}, θ has {} entries",
                z.len(),
                self.entries.len()
            )));
        }
        let mut p = self.clone();
        for (e, &zi) in p.entries.iter_mut().zip(z.iter()) {
            e.value = match e.constraint {
                Constraint::Positive => zi.exp(),
                Constraint::Unconstrained => zi,
            };
        }
        Ok(p)
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|e| format!("{}={:.6}", e.name, e.value))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Named values in document order, as found in JSON `{name: value}` objects.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedValues(pub Vec<(String, f64)>);

impl Serialize for NamedValues {
    fn serialize<Se: Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for NamedValues {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = NamedValues;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping parameter names to numbers")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> std::result::Result<NamedValues, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = a.next_entry::<String, f64>()? {
                    out.push((k, v));
                }
                Ok(NamedValues(out))
            }
        }
        d.deserialize_map(V)
    }
}

impl From<&ParamVector> for NamedValues {
    fn from(p: &ParamVector) -> Self {
        NamedValues(p.named_values())
    }
}

/// One recorded state trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    /// Controls actually applied; diagnostics only, never used for fitting.
    pub controls: Option<Vec<DVector<f64>>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Settings recorded alongside generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub alpha: f64,
    pub solver_max_iter: usize,
    pub solver_tol: f64,
    pub solver_converged: bool,
    pub code_version: String,
}

/// A set of trajectories generated from one θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: String,
    pub variant: Variant,
    pub theta_true: NamedValues,
    pub horizon: usize,
    pub n: usize,
    pub seed: u64,
    pub generator: Option<GeneratorInfo>,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    task: String,
    variant: Variant,
    theta_true: NamedValues,
    #[serde(rename = "T")]
    horizon: usize,
    n: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<GeneratorInfo>,
    #[serde(default)]
    trajectory_seeds: Vec<u64>,
    trajectories: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    controls: Option<Vec<Vec<Vec<f64>>>>,
}

fn rows(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.as_slice().to_vec()).collect()
}

impl Dataset {
    /// Checks shared horizon and dimension and finiteness of all entries.
    pub fn validate(&self) -> Result<()> {
        for (i, tr) in self.trajectories.iter().enumerate() {
            if tr.states.len() != self.horizon {
                return Err(NiocError::InvalidInput(format!(
                    "trajectory {i} has {} states, dataset declares T={}",
                    tr.states.len(),
                    self.horizon
                )));
            }
            for x in &tr.states {
                if x.len() != self.n {
                    return Err(NiocError::InvalidInput(format!(
                        "trajectory {i} has a state of dimension {}, dataset declares n={}",
                        x.len(),
                        self.n
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(NiocError::non_finite(format!("trajectory {i}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self, include_controls: bool) -> Result<String> {
        let controls = if include_controls && self.trajectories.iter().all(|t| t.controls.is_some()) {
            Some(
                self.trajectories
                    .iter()
                    .map(|t| rows(t.controls.as_ref().unwrap()))
                    .collect(),
            )
        } else {
            None
        };
        let doc = DatasetDoc {
            task: self.task.clone(),
            variant: self.variant,
            theta_true: self.theta_true.clone(),
            horizon: self.horizon,
            n: self.n,
            seed: self.seed,
            generator: self.generator.clone(),
            trajectory_seeds: self.trajectories.iter().map(|t| t.seed).collect(),
            trajectories: self.trajectories.iter().map(|t| rows(&t.states)).collect(),
            controls,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: DatasetDoc = serde_json::from_str(s)?;
        let n_traj = doc.trajectories.len();
        if !doc.trajectory_seeds.is_empty() && doc.trajectory_seeds.len() != n_traj {
            return Err(NiocError::InvalidInput(
                "trajectory_seeds length differs from number of trajectories".into(),
            ));
        }
        if let Some(c) = &doc.controls {
            if c.len() != n_traj {
                return Err(NiocError::InvalidInput(
                    "controls length differs from number of trajectories".into(),
                ));
            }
        }
        let trajectories = doc
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, states)| Trajectory {
                states: states.iter().map(|r| DVector::from_vec(r.clone())).collect(),
                controls: doc
                    .controls
                    .as_ref()
                    .map(|c| c[i].iter().map(|r| DVector::from_vec(r.clone())).collect()),
                seed: doc.trajectory_seeds.get(i).copied().unwrap_or(0),
            })
            .collect();
        let ds = Dataset {
            task: doc.task,
            variant: doc.variant,
            theta_true: doc.theta_true,
            horizon: doc.horizon,
            n: doc.n,
            seed: doc.seed,
            generator: doc.generator,
            trajectories,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// One row per (trajectory, t): `traj_id,t,x_0,…,x_{n−1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("traj_id,t");
        for i in 0..self.n {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for (k, tr) in self.trajectories.iter().enumerate() {
            for (t, x) in tr.states.iter().enumerate() {
                out.push_str(&format!("{k},{t}"));
                for v in x.iter() {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lightdark_like() -> ParamVector {
        ParamVector::new()
            .with("sigma", 0.2, Constraint::Positive)
            .with("c", 0.5, Constraint::Positive)
            .with("p", -0.5, Constraint::Unconstrained)
    }

    #[test]
    fn log_transform_examples() {
        let p = ParamVector::new().with("c_a", 1.0, Constraint::Positive);
        assert_eq!(p.to_optimizer_space().unwrap()[0], 0.0);
        let p = ParamVector::new().with("c_a", std::f64::consts::E, Constraint::Positive);
        assert!((p.to_optimizer_space().unwrap()[0] - 1.0).abs() < 1e-15);
        assert_eq!(lightdark_like().to_optimizer_space().unwrap()[2], -0.5);
    }

    #[test]
    fn non_positive_parameter_rejected() {
        let p = ParamVector::new().with("c", 0.0, Constraint::Positive);
        assert!(matches!(
            p.to_optimizer_space(),
            Err(NiocError::NonPositiveParameter { .. })
        ));
    }

    #[test]
    fn missing_parameter_reported() {
        let specs = vec![
            ParamSpec::positive("sigma", 0.2, (0.01, 1.0)),
            ParamSpec::positive("c", 0.1, (0.01, 1.0)),
        ];
        let r = ParamVector::from_named(&specs, &[("sigma".into(), 0.3)]);
        assert_eq!(r, Err(NiocError::MissingParameter("c".into())));
    }

    #[test]
    fn named_values_keep_document_order() {
        let nv: NamedValues = serde_json::from_str(r#"{"z": 1.0, "a": 2.0}"#).unwrap();
        assert_eq!(nv.0[0].0, "z");
        assert_eq!(serde_json::to_string(&nv).unwrap(), r#"{"z":1.0,"a":2.0}"#);
    }

    #[test]
    fn dataset_json_round_trip() {
        let ds = Dataset {
            task: "pendulum".into(),
            variant: Variant::Full,
            theta_true: NamedValues(vec![("c_a".into(), 0.1)]),
            horizon: 2,
            n: 2,
            seed: 7,
            generator: None,
            trajectories: vec![Trajectory {
                states: vec![DVector::from_row_slice(&[3.0, 0.0]), DVector::from_row_slice(&[2.9, -0.5])],
                controls: Some(vec![DVector::from_row_slice(&[0.25])]),
                seed: 99,
            }],
        };
        let back = Dataset::from_json(&ds.to_json(true).unwrap()).unwrap();
        assert_eq!(back, ds);
        let no_controls = Dataset::from_json(&ds.to_json(false).unwrap()).unwrap();
        assert!(no_controls.trajectories[0].controls.is_none());
        assert_eq!(ds.to_csv(), "traj_id,t,x_0,x_1\n0,0,3,0\n0,1,2.9,-0.5\n");
    }

    #[test]
    fn dataset_rejects_ragged_trajectories() {
        let json = r#"{"task":"pendulum","variant":"full","theta_true":{},"T":2,"n":1,"seed":0,
                      "trajectories":[[[0.0],[1.0]],[[0.0]]]}"#;
        assert!(matches!(Dataset::from_json(json), Err(NiocError::InvalidInput(_))));
        assert!(matches!(Dataset::from_json("{nope"), Err(NiocError::Json(_))));
    }

    proptest! {
        #[test]
        fn optimizer_space_round_trip(sigma in 1e-3f64..10.0, c in 1e-3f64..10.0, p in -5.0f64..5.0) {
            let theta = ParamVector::new()
                .with("sigma", sigma, Constraint::Positive)
                .with("c", c, Constraint::Positive)
                .with("p", p, Constraint::Unconstrained);
            let z = theta.to_optimizer_space().unwrap();
            let back = theta.from_optimizer_space(&z).unwrap();
            for (a, b) in theta.entries().iter().zip(back.entries()) {
                prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
            }
            let z2 = back.to_optimizer_space().unwrap();
            prop_assert!((z - z2).amax() <= 1e-12);
        }
    }
}
