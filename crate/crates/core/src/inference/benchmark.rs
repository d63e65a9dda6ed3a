use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::envs::{TaskConfig, TaskFactory, TaskId};
use crate::error::Result;
use crate::model::{Dataset, GeneratorInfo, ModelFactory, NamedValues, ParamVector, Variant};
use crate::solvers::{ilqg_solve, mix_seed, simulate, SolverSettings};

use super::report::{relative_errors, BenchmarkFailure, EvalReport, EvalRow};
use super::{fit, specs_with_ranges, FitSettings, Method};

/// Solve the agent's problem at `theta` and simulate `n_traj` trajectories.
/// Recorded controls are kept on the trajectories.
pub fn simulate_dataset<F: ModelFactory>(
    factory: &F,
    task: &str,
    theta: &ParamVector,
    n_traj: usize,
    seed: u64,
    solver: &SolverSettings,
) -> Result<Dataset> {
    let model = factory.build(theta)?;
    let sol = ilqg_solve(&model, solver)?;
    let trajectories = simulate(&model, &sol.law, sol.filter.as_ref(), n_traj, seed)?;
    Ok(Dataset {
        task: task.to_string(),
        variant: model.variant,
        theta_true: NamedValues::from(theta),
        horizon: model.horizon,
        n: model.dims().n,
        seed,
        generator: Some(GeneratorInfo {
            alpha: model.alpha,
            solver_max_iter: solver.max_iter,
            solver_tol: solver.tol,
            solver_converged: sol.converged,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }),
        trajectories,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSettings {
    pub task: TaskId,
    pub variant: Variant,
    pub methods: Vec<Method>,
    pub n_datasets: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub config: TaskConfig,
    pub solver: SolverSettings,
    /// Restart count and optimizer settings; the seed is derived per dataset
    /// and the ranges are shared with data generation.
    pub fit: FitSettings,
}

/// Sample θ, simulate, fit with every method and score, per dataset.
///
/// Reaching datasets cycle through the eight targets by dataset index.
/// Failures of single datasets or fits are recorded and skipped.
pub fn benchmark(settings: &BenchmarkSettings) -> Result<EvalReport> {
    let specs = specs_with_ranges(settings.task.param_specs(settings.variant), &settings.fit.ranges)?;
    settings.task.check_variant(settings.variant)?;
    let per_dataset: Vec<(Vec<EvalRow>, Vec<BenchmarkFailure>)> = (0..settings.n_datasets)
        .into_par_iter()
        .map(|d| {
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(settings.seed, 3 * d as u64));
            let theta = ParamVector::sample(&specs, &mut rng);
            let mut config = settings.config.clone();
            if settings.task == TaskId::Reaching {
                config.target = Some(d % 8);
            }
            let factory = match TaskFactory::new(settings.task, settings.variant, config) {
                Ok(f) => f,
                Err(e) => {
                    failures.push(BenchmarkFailure { dataset_id: d, method: None, message: e.to_string() });
                    return (rows, failures);
                }
            };
            let data_seed = mix_seed(settings.seed, 3 * d as u64 + 1);
            let dataset = match simulate_dataset(&factory, settings.task.as_str(), &theta, settings.n_traj, data_seed, &settings.solver) {
                Ok(ds) => ds,
                Err(e) => {
                    failures.push(BenchmarkFailure { dataset_id: d, method: None, message: e.to_string() });
                    return (rows, failures);
                }
            };
            let fit_settings = FitSettings {
                seed: mix_seed(settings.seed, 3 * d as u64 + 2),
                ..settings.fit.clone()
            };
            for &method in &settings.methods {
                let result = fit(&factory, &dataset.trajectories, method, &fit_settings)
                    .and_then(|f| relative_errors(&theta, &f.theta_hat).map(|errs| (f, errs)));
                match result {
                    Ok((f, errs)) => rows.extend(errs.into_iter().map(|e| EvalRow {
                        task: settings.task.as_str().to_string(),
                        variant: settings.variant.as_str().to_string(),
                        method,
                        dataset_id: d,
                        param_name: e.name,
                        theta_true: e.theta_true,
                        theta_hat: e.theta_hat,
                        abs_rel_err: e.abs_rel_err,
                        loglik: f.loglik,
                        wall_time_s: f.wall_time_s,
                    })),
                    Err(e) => failures.push(BenchmarkFailure { dataset_id: d, method: Some(method), message: e.to_string() }),
                }
            }
            (rows, failures)
        })
        .collect();
    let mut report = EvalReport::default();
    for (rows, failures) in per_dataset {
        report.rows.extend(rows);
        report.failures.extend(failures);
    }
    Ok(report)
}
