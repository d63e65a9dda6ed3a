//! Maximum-likelihood estimation of θ from datasets, and the evaluation
//! loop that simulates, fits and scores.

mod benchmark;
pub mod lbfgs;
mod report;

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::baseline_dataset_log_likelihood;
use crate::error::{NiocError, Result};
use crate::likelihood::{dataset_log_likelihood, estimate_dataset_controls};
use crate::model::{ModelFactory, NamedValues, ParamSpec, ParamVector, Trajectory};
use crate::solvers::mix_seed;

pub use benchmark::{benchmark, simulate_dataset, BenchmarkSettings};
pub use lbfgs::{LbfgsSettings, Termination};
pub use report::{median, relative_errors, BenchmarkFailure, EvalReport, EvalRow, RelativeError};

/// Likelihood used for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ours,
    Baseline,
    /// Baseline with the recorded controls instead of estimated ones.
    BaselineGivenControls,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Baseline => "baseline",
            Method::BaselineGivenControls => "baseline-given-controls",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = NiocError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Method::Ours),
            "baseline" => Ok(Method::Baseline),
            "baseline-given-controls" => Ok(Method::BaselineGivenControls),
            _ => Err(NiocError::InvalidInput(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub restarts: usize,
    pub seed: u64,
    /// Central-difference step in optimizer space.
    pub fd_step: f64,
    pub optimizer: LbfgsSettings,
    /// Replaces the first restart's random start.
    pub initial: Option<ParamVector>,
    /// Sampling ranges replacing those of the parameter specs, by name.
    pub ranges: Vec<(String, (f64, f64))>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            fd_step: 1e-4,
            optimizer: LbfgsSettings {
                max_iter: 50,
                grad_tol: 1e-6,
                f_tol: 1e-9,
                ..Default::default()
            },
            initial: None,
            ranges: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub start: NamedValues,
    pub end: NamedValues,
    pub loglik_start: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub status: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    pub loglik: f64,
    pub method: Method,
    pub restarts: Vec<RestartRecord>,
    pub evaluations: usize,
    pub wall_time_s: f64,
}

/// Serializable view of a fit without timing.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary<'a> {
    pub method: Method,
    pub theta_hat: NamedValues,
    pub loglik: f64,
    pub evaluations: usize,
    pub restarts: &'a [RestartRecord],
}

impl FitResult {
    pub fn summary(&self) -> FitSummary<'_> {
        FitSummary {
            method: self.method,
            theta_hat: NamedValues::from(&self.theta_hat),
            loglik: self.loglik,
            evaluations: self.evaluations,
            restarts: &self.restarts,
        }
    }
}

/// Specs with sampling ranges replaced by `ranges`.
pub fn specs_with_ranges(mut specs: Vec<ParamSpec>, ranges: &[(String, (f64, f64))]) -> Result<Vec<ParamSpec>> {
    for (name, range) in ranges {
        let spec = specs
            .iter_mut()
            .find(|s| s.name == name)
            .ok_or_else(|| NiocError::InvalidInput(format!("range for unknown parameter '{name}'")))?;
        if !(range.0 < range.1) || (spec.constraint == crate::model::Constraint::Positive && range.0 <= 0.0) {
            return Err(NiocError::InvalidInput(format!("invalid range for '{name}': {range:?}")));
        }
        spec.range = *range;
    }
    Ok(specs)
}

/// Dataset log likelihood of one method, with controls shared across
/// evaluations where the factory allows it.
pub struct Objective<'a, F: ModelFactory> {
    factory: &'a F,
    trajectories: &'a [Trajectory],
    method: Method,
    controls: Option<Vec<Vec<DVector<f64>>>>,
    evaluations: AtomicUsize,
}

impl<'a, F: ModelFactory> Objective<'a, F> {
    pub fn new(factory: &'a F, trajectories: &'a [Trajectory], method: Method) -> Result<Self> {
        let controls = match method {
            Method::BaselineGivenControls => {
                let c: Option<Vec<_>> = trajectories.iter().map(|t| t.controls.clone()).collect();
                Some(c.ok_or_else(|| {
                    NiocError::InvalidInput("the given-controls baseline needs recorded controls".into())
                })?)
            }
            _ if !factory.mean_dynamics_depend_on_theta() => {
                let specs = factory.param_specs();
                let model = factory.build(&ParamVector::defaults(&specs))?;
                Some(estimate_dataset_controls(&model, trajectories))
            }
            _ => None,
        };
        Ok(Self {
            factory,
            trajectories,
            method,
            controls,
            evaluations: AtomicUsize::new(0),
        })
    }

    /// Dataset log likelihood; −∞ when the model cannot be built or any
    /// trajectory fails.
    pub fn log_likelihood(&self, theta: &ParamVector) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let controls = self.controls.as_deref();
        let r = match self.method {
            Method::Ours => dataset_log_likelihood(self.factory, self.trajectories, theta, controls),
            Method::Baseline | Method::BaselineGivenControls => {
                baseline_dataset_log_likelihood(self.factory, self.trajectories, theta, controls)
            }
        };
        match r {
            Ok(d) if d.total.is_finite() => d.total,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn transitions(&self) -> f64 {
        let n: usize = self.trajectories.iter().map(|t| t.states.len().saturating_sub(1)).sum();
        n.max(1) as f64
    }

    /// Central-difference gradient of the log likelihood in optimizer space.
    /// Falls back to a one-sided difference when one side is infeasible.
    /// `f0` is the value at `z`.
    pub fn gradient(&self, template: &ParamVector, z: &DVector<f64>, f0: f64, h: f64) -> Result<DVector<f64>> {
        let at = |z: &DVector<f64>| -> Result<f64> { Ok(self.log_likelihood(&template.from_optimizer_space(z)?)) };
        let mut g = DVector::zeros(z.len());
        for i in 0..z.len() {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let (fp, fm) = (at(&zp)?, at(&zm)?);
            g[i] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (zp[i] - zm[i]),
                (true, false) => (fp - f0) / (zp[i] - z[i]),
                (false, true) => (f0 - fm) / (z[i] - zm[i]),
                (false, false) => 0.0,
            };
        }
        Ok(g)
    }
}

/// Maximum-likelihood fit with seeded random restarts.
pub fn fit<F: ModelFactory>(factory: &F, trajectories: &[Trajectory], method: Method, settings: &FitSettings) -> Result<FitResult> {
    if trajectories.is_empty() {
        return Err(NiocError::InvalidInput("cannot fit an empty dataset".into()));
    }
    if settings.restarts == 0 {
        return Err(NiocError::InvalidInput("at least one restart is required".into()));
    }
    let started = Instant::now();
    let specs = specs_with_ranges(factory.param_specs(), &settings.ranges)?;
    let objective = Objective::new(factory, trajectories, method)?;
    let lo = DVector::from_iterator(specs.len(), specs.iter().map(|s| s.optimizer_bounds().0));
    let hi = DVector::from_iterator(specs.len(), specs.iter().map(|s| s.optimizer_bounds().1));
    let scale = objective.transitions();

    let records: Vec<Result<RestartRecord>> = (0..settings.restarts)
        .into_par_iter()
        .map(|r| {
            let start = match (&settings.initial, r) {
                (Some(init), 0) => ParamVector::from_named(&specs, &init.named_values())?,
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(settings.seed, r as u64));
                    ParamVector::sample(&specs, &mut rng)
                }
            };
            let z0 = start.to_optimizer_space()?;
            let fg = |z: &DVector<f64>| {
                let theta = match start.from_optimizer_space(z) {
                    Ok(t) => t,
                    Err(_) => return (f64::INFINITY, DVector::zeros(z.len())),
                };
                let ll = objective.log_likelihood(&theta);
                if !ll.is_finite() {
                    return (f64::INFINITY, DVector::zeros(z.len()));
                }
                let g = objective
                    .gradient(&start, z, ll, settings.fd_step)
                    .unwrap_or_else(|_| DVector::zeros(z.len()));
                (-ll / scale, -g / scale)
            };
            let m = lbfgs::minimize(fg, &z0, &lo, &hi, &settings.optimizer);
            let end = start.from_optimizer_space(&m.x)?;
            Ok(RestartRecord {
                restart: r,
                start: NamedValues::from(&start),
                end: NamedValues::from(&end),
                loglik_start: -m.f_start * scale,
                loglik: -m.f * scale,
                iterations: m.iterations,
                status: m.termination,
            })
        })
        .collect();
    let records: Vec<RestartRecord> = records.into_iter().collect::<Result<_>>()?;

    // first restart wins ties, so the choice does not depend on scheduling
    let best = records
        .iter()
        .filter(|r| r.loglik.is_finite())
        .fold(None::<&RestartRecord>, |acc, r| match acc {
            Some(b) if b.loglik >= r.loglik => Some(b),
            _ => Some(r),
        })
        .ok_or(NiocError::AllRestartsFailed)?;
    let theta_hat = ParamVector::from_named(&specs, &best.end.0)?;
    Ok(FitResult {
        theta_hat,
        loglik: best.loglik,
        method,
        evaluations: objective.evaluations(),
        restarts: records,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
