//! Benchmark tasks and the registry that turns (task, θ, variant) into models.

pub mod cartpole;
pub mod lightdark;
pub mod linear;
pub mod navigation;
pub mod pendulum;
pub mod reaching;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{NiocError, Result};
use crate::math::real::Real;
use crate::model::{Dims, ModelFactory, ParamSpec, ParamVector, PomdpModel, System, Variant};

pub use cartpole::CartPole;
pub use lightdark::LightDark;
pub use navigation::Navigation;
pub use pendulum::Pendulum;
pub use reaching::Reaching;

/// One classic fourth-order Runge-Kutta step of `ẋ = deriv(x)`.
pub(crate) fn rk4<R: Real, F: Fn(&[R]) -> Vec<R>>(deriv: F, x: &[R], dt: f64) -> Vec<R> {
    let axpy = |a: &[R], k: &[R], s: f64| -> Vec<R> { a.iter().zip(k).map(|(&ai, &ki)| ai + ki * s).collect() };
    let k1 = deriv(x);
    let k2 = deriv(&axpy(x, &k1, 0.5 * dt));
    let k3 = deriv(&axpy(x, &k2, 0.5 * dt));
    let k4 = deriv(&axpy(x, &k3, dt));
    (0..x.len())
        .map(|i| x[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskId {
    Pendulum,
    CartPole,
    Reaching,
    Navigation,
    LightDark,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::Pendulum,
        TaskId::CartPole,
        TaskId::Reaching,
        TaskId::Navigation,
        TaskId::LightDark,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Pendulum => "pendulum",
            TaskId::CartPole => "cartpole",
            TaskId::Reaching => "reaching",
            TaskId::Navigation => "navigation",
            TaskId::LightDark => "lightdark",
        }
    }

    pub fn supports(self, variant: Variant) -> bool {
        match self {
            TaskId::LightDark => variant.is_partial(),
            _ => true,
        }
    }

    pub fn check_variant(self, variant: Variant) -> Result<()> {
        if self.supports(variant) {
            Ok(())
        } else {
            Err(NiocError::UnsupportedVariant {
                task: self.as_str().into(),
                variant: variant.as_str().into(),
            })
        }
    }

    /// Number of states per trajectory.
    pub fn default_horizon(self) -> usize {
        match self {
            TaskId::CartPole => 200,
            _ => 50,
        }
    }

    /// Temperature of the maximum-entropy policy.
    pub fn default_alpha(self) -> f64 {
        match self {
            TaskId::Reaching | TaskId::Navigation => 1e-6,
            TaskId::Pendulum | TaskId::CartPole => 1e-3,
            TaskId::LightDark => 1e-5,
        }
    }

    /// Free parameters, their defaults and sampling ranges.
    pub fn param_specs(self, variant: Variant) -> Vec<ParamSpec> {
        const RANGE: (f64, f64) = (1e-2, 1.0);
        match self {
            TaskId::LightDark => vec![
                ParamSpec::positive("sigma", 0.2, RANGE),
                // effort is cheap at this time step, so light preferences
                // that matter sit orders of magnitude below the sampling range
                ParamSpec::positive("c", 0.1, RANGE).with_floor(lightdark::C_FLOOR),
                ParamSpec::unconstrained("p", 0.0, (-1.0, 1.0)),
            ],
            _ => {
                let mut specs = vec![
                    ParamSpec::positive("c_a", 0.1, RANGE),
                    ParamSpec::positive("c_v", 0.1, RANGE),
                    ParamSpec::positive("sigma_m", 0.1, RANGE),
                ];
                if variant.is_partial() {
                    specs.push(ParamSpec::positive("sigma_o", 0.1, RANGE));
                }
                specs
            }
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = NiocError;
    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| NiocError::UnknownTask(s.to_string()))
    }
}

/// Per-run task settings that are not inferred.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskConfig {
    pub alpha: Option<f64>,
    pub horizon: Option<usize>,
    /// Reaching target index (0..8).
    pub target: Option<usize>,
}

/// A concrete task system; dispatches to the individual tasks.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSystem {
    Pendulum(Pendulum),
    CartPole(CartPole),
    Reaching(Reaching),
    Navigation(Navigation),
    LightDark(LightDark),
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            TaskSystem::Pendulum($s) => $body,
            TaskSystem::CartPole($s) => $body,
            TaskSystem::Reaching($s) => $body,
            TaskSystem::Navigation($s) => $body,
            TaskSystem::LightDark($s) => $body,
        }
    };
}

impl System for TaskSystem {
    fn dims(&self) -> Dims {
        dispatch!(self, s => s.dims())
    }
    fn dynamics<R: Real>(&self, x: &[R], u: &[R], v: &[R]) -> Vec<R> {
        dispatch!(self, s => s.dynamics(x, u, v))
    }
    fn observe<R: Real>(&self, x: &[R], w: &[R]) -> Vec<R> {
        dispatch!(self, s => s.observe(x, w))
    }
    fn running_cost<R: Real>(&self, x: &[R], u: &[R], t: usize) -> R {
        dispatch!(self, s => s.running_cost(x, u, t))
    }
    fn final_cost<R: Real>(&self, x: &[R]) -> R {
        dispatch!(self, s => s.final_cost(x))
    }
    fn initial_control(&self) -> Vec<f64> {
        dispatch!(self, s => s.initial_control())
    }
}

fn sigma_o(theta: &ParamVector, variant: Variant, default: f64) -> Result<f64> {
    if variant.is_partial() {
        theta.get("sigma_o")
    } else {
        Ok(theta.get("sigma_o").unwrap_or(default))
    }
}

/// Binds a task definition to θ.
pub fn instantiate(
    task: TaskId,
    theta: &ParamVector,
    variant: Variant,
    cfg: &TaskConfig,
) -> Result<PomdpModel<TaskSystem>> {
    task.check_variant(variant)?;
    let alpha = cfg.alpha.unwrap_or_else(|| task.default_alpha());
    let horizon = cfg.horizon.unwrap_or_else(|| task.default_horizon());
    if horizon == 0 {
        return Err(NiocError::InvalidInput("horizon must be at least 1".into()));
    }
    if !(alpha >= 0.0) {
        return Err(NiocError::InvalidInput(format!("temperature must be ≥ 0, got {alpha}")));
    }
    let (system, x1): (TaskSystem, Vec<f64>) = match task {
        TaskId::Pendulum => (
            TaskSystem::Pendulum(Pendulum {
                c_a: theta.get("c_a")?,
                c_v: theta.get("c_v")?,
                sigma_m: theta.get("sigma_m")?,
                sigma_o: sigma_o(theta, variant, pendulum::DEFAULT_OBS_NOISE)?,
            }),
            Pendulum::START.to_vec(),
        ),
        TaskId::CartPole => (
            TaskSystem::CartPole(CartPole {
                c_a: theta.get("c_a")?,
                c_v: theta.get("c_v")?,
                sigma_m: theta.get("sigma_m")?,
                sigma_o: sigma_o(theta, variant, 1.0)?,
            }),
            CartPole::START.to_vec(),
        ),
        TaskId::Reaching => (
            TaskSystem::Reaching(Reaching {
                c_a: theta.get("c_a")?,
                c_v: theta.get("c_v")?,
                sigma_m: theta.get("sigma_m")?,
                sigma_o: sigma_o(theta, variant, 0.1)?,
                target: Reaching::target(cfg.target.unwrap_or(0)),
            }),
            Reaching::start_state().to_vec(),
        ),
        TaskId::Navigation => (
            TaskSystem::Navigation(Navigation {
                c_a: theta.get("c_a")?,
                c_v: theta.get("c_v")?,
                sigma_m: theta.get("sigma_m")?,
                sigma_o: sigma_o(theta, variant, 0.1)?,
                target: navigation::TARGET,
            }),
            Navigation::START.to_vec(),
        ),
        TaskId::LightDark => (
            TaskSystem::LightDark(LightDark {
                sigma: theta.get("sigma")?,
                c: theta.get("c")?,
                p: theta.get("p")?,
            }),
            lightdark::START.to_vec(),
        ),
    };
    let mut model = PomdpModel::new(system, variant, horizon, DVector::from_vec(x1), alpha);
    if task == TaskId::LightDark {
        model.belief_cov = DMatrix::identity(2, 2) * lightdark::INITIAL_BELIEF_VAR;
    }
    Ok(model)
}

/// Registry entry: builds task models for a fixed variant and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskFactory {
    pub task: TaskId,
    pub variant: Variant,
    pub config: TaskConfig,
}

impl TaskFactory {
    pub fn new(task: TaskId, variant: Variant, config: TaskConfig) -> Result<Self> {
        task.check_variant(variant)?;
        Ok(Self { task, variant, config })
    }
}

impl ModelFactory for TaskFactory {
    type Sys = TaskSystem;

    fn param_specs(&self) -> Vec<ParamSpec> {
        self.task.param_specs(self.variant)
    }

    fn build(&self, theta: &ParamVector) -> Result<PomdpModel<TaskSystem>> {
        instantiate(self.task, theta, self.variant, &self.config)
    }

    fn mean_dynamics_depend_on_theta(&self) -> bool {
        // every task's θ enters only costs, noise scales and observations
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Constraint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn defaults(task: TaskId, variant: Variant) -> ParamVector {
        ParamVector::defaults(&task.param_specs(variant))
    }

    #[test]
    fn pendulum_dimensions_and_horizon() {
        let m = instantiate(TaskId::Pendulum, &defaults(TaskId::Pendulum, Variant::Full), Variant::Full, &TaskConfig::default())
            .unwrap();
        let d = m.dims();
        assert_eq!((d.n, d.nu, m.horizon), (2, 1, 50));
        let p = instantiate(
            TaskId::Pendulum,
            &defaults(TaskId::Pendulum, Variant::Partial),
            Variant::Partial,
            &TaskConfig::default(),
        )
        .unwrap();
        assert_eq!(p.dims().m, 3);
    }

    #[test]
    fn cartpole_horizon_and_observation_dim() {
        let m = instantiate(
            TaskId::CartPole,
            &defaults(TaskId::CartPole, Variant::Partial),
            Variant::Partial,
            &TaskConfig::default(),
        )
        .unwrap();
        assert_eq!(m.horizon, 200);
        assert_eq!(m.dims().m, 4);
    }

    #[test]
    fn lightdark_requires_all_parameters() {
        let theta = ParamVector::new()
            .with("sigma", 0.2, Constraint::Positive)
            .with("p", 0.0, Constraint::Unconstrained);
        assert_eq!(
            instantiate(TaskId::LightDark, &theta, Variant::Partial, &TaskConfig::default()).unwrap_err(),
            NiocError::MissingParameter("c".into())
        );
    }

    #[test]
    fn lightdark_has_no_fully_observable_variant() {
        assert!(matches!(
            instantiate(
                TaskId::LightDark,
                &defaults(TaskId::LightDark, Variant::Partial),
                Variant::Full,
                &TaskConfig::default()
            ),
            Err(NiocError::UnsupportedVariant { .. })
        ));
    }

    #[test]
    fn unknown_task_id() {
        assert_eq!("acrobot".parse::<TaskId>(), Err(NiocError::UnknownTask("acrobot".into())));
        for t in TaskId::ALL {
            assert_eq!(t.as_str().parse::<TaskId>().unwrap(), t);
        }
    }

    #[test]
    fn noise_enters_affinely_for_every_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for task in TaskId::ALL {
            let variant = if task == TaskId::LightDark { Variant::Partial } else { Variant::Full };
            let theta = ParamVector::sample(&task.param_specs(variant), &mut rng);
            let m = instantiate(task, &theta, variant, &TaskConfig::default()).unwrap();
            let d = m.dims();
            for _ in 0..20 {
                let x = DVector::from_fn(d.n, |_, _| rng.gen_range(-2.0..2.0)) + &m.x1;
                let u = DVector::from_fn(d.nu, |_, _| rng.gen_range(-2.0..2.0));
                let v1 = DVector::from_fn(d.nv, |_, _| rng.gen_range(-2.0..2.0));
                let v2 = DVector::from_fn(d.nv, |_, _| rng.gen_range(-2.0..2.0));
                let f0 = m.step_mean(&x, &u);
                let a = m.step(&x, &u, &v1) - &f0;
                let b = m.step(&x, &u, &v2) - &f0;
                let ab = m.step(&x, &u, &(&v1 * 0.3 + &v2 * 1.7)) - &f0;
                let lin = &a * 0.3 + &b * 1.7;
                assert!((ab - lin).amax() < 1e-10, "{task}");
            }
        }
    }

    #[test]
    fn equal_parameters_give_bitwise_equal_dynamics() {
        for task in TaskId::ALL {
            let variant = Variant::Partial;
            let theta = defaults(task, variant);
            let a = instantiate(task, &theta, variant, &TaskConfig::default()).unwrap();
            let b = instantiate(task, &theta, variant, &TaskConfig::default()).unwrap();
            let d = a.dims();
            let x = &a.x1 + DVector::from_element(d.n, 0.1);
            let u = DVector::from_element(d.nu, 0.7);
            let v = DVector::from_element(d.nv, -0.4);
            assert_eq!(a.step(&x, &u, &v), b.step(&x, &u, &v));
        }
    }
}
