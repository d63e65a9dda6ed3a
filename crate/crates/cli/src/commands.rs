use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nioc::envs::{TaskConfig, TaskFactory, TaskId};
use nioc::inference::{
    benchmark as run_benchmark, fit as run_fit, median, relative_errors, simulate_dataset, BenchmarkSettings, EvalReport,
    FitSettings, Method,
};
use nioc::model::{Dataset, ModelFactory, NamedValues, ParamVector, Variant};
use nioc::solvers::{mix_seed, SolverSettings};
use nioc::NiocError;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{self, ConfigFile, TaskSettings};
use crate::output::{OutDir, Provenance, Timing};
use crate::{BenchmarkArgs, Common, FitArgs, SimulateArgs, StudyArgs};

type Result<T> = std::result::Result<T, NiocError>;

const DEFAULT_N_TRAJ: usize = 50;
const DEFAULT_RESTARTS: usize = 10;
const DEFAULT_N_DATASETS: usize = 10;

fn load(common: &Common) -> Result<ConfigFile> {
    match &common.config {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn out_dir(common: &Common, file: &ConfigFile) -> Result<OutDir> {
    let root = common.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    OutDir::create(&root)
}

fn task_settings(common: &Common, file: &ConfigFile, base: TaskSettings) -> TaskSettings {
    TaskSettings {
        alpha: common.alpha.or(file.alpha).or(base.alpha),
        horizon: common.horizon.or(file.horizon).or(base.horizon),
        target: common.target.or(file.target).or(base.target),
    }
}

fn required_task(flag: &Option<String>, file: &ConfigFile) -> Result<TaskId> {
    let s = flag
        .as_deref()
        .or(file.task.as_deref())
        .ok_or_else(|| NiocError::InvalidInput("no task given (use --task or the config key 'task')".into()))?;
    config::parse_task(s)
}

fn variant_or(flag: &Option<String>, file: &ConfigFile, default: Variant) -> Result<Variant> {
    match flag.as_deref().or(file.variant.as_deref()) {
        Some(s) => config::parse_variant(s),
        None => Ok(default),
    }
}

/// Light-dark exists only with partial observability.
fn default_variant(task: TaskId) -> Variant {
    match task {
        TaskId::LightDark => Variant::Partial,
        _ => Variant::Full,
    }
}

fn methods(flag: &Option<String>, file: &ConfigFile, default: &[Method]) -> Result<Vec<Method>> {
    let names = match (flag, &file.methods) {
        (Some(s), _) => config::parse_list(s),
        (None, Some(v)) => v.clone(),
        (None, None) => return Ok(default.to_vec()),
    };
    if names.is_empty() {
        return Err(NiocError::InvalidInput("empty method list".into()));
    }
    names.iter().map(|s| config::parse_method(s)).collect()
}

fn ranges(flag: &Option<String>, file: &ConfigFile) -> Result<BTreeMap<String, [f64; 2]>> {
    let mut out = file.ranges.clone().unwrap_or_default();
    if let Some(s) = flag {
        out.extend(config::parse_ranges(s)?);
    }
    Ok(out)
}

fn range_list(r: &BTreeMap<String, [f64; 2]>) -> Vec<(String, (f64, f64))> {
    r.iter().map(|(k, v)| (k.clone(), (v[0], v[1]))).collect()
}

fn opt_json(v: Option<f64>) -> Value {
    v.map_or(Value::Null, Value::from)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Dataset JSON with a trailing `meta` object.
fn dataset_json(ds: &Dataset, include_controls: bool, prov: &Provenance, settings: &TaskSettings) -> Result<String> {
    let body = ds.to_json(include_controls)?;
    let meta = serde_json::to_string(&json!({
        "config_hash": prov.config_hash,
        "code_version": prov.code_version,
        "task_settings": settings,
    }))?;
    let open = body
        .strip_suffix('}')
        .ok_or_else(|| NiocError::Json("dataset serialization is not an object".into()))?;
    Ok(format!("{open},\"meta\":{meta}}}\n"))
}

#[derive(Serialize)]
struct SimulateConfig {
    task: &'static str,
    variant: Variant,
    theta: NamedValues,
    n_traj: usize,
    seed: u64,
    task_settings: TaskSettings,
    include_controls: bool,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut timing = Timing::start();
    let file = load(&args.common)?;
    let task = required_task(&args.task, &file)?;
    let variant = variant_or(&args.variant, &file, default_variant(task))?;
    let settings = task_settings(&args.common, &file, TaskSettings::default());
    let factory = TaskFactory::new(task, variant, TaskConfig::from(&settings))?;
    let mut theta = ParamVector::defaults(&factory.param_specs());
    if let Some(v) = &file.theta {
        theta = theta.overridden(&v.0)?;
    }
    if let Some(s) = &args.theta {
        theta = theta.overridden(&config::parse_named(s)?.0)?;
    }
    let cfg = SimulateConfig {
        task: task.as_str(),
        variant,
        theta: NamedValues::from(&theta),
        n_traj: args.n_traj.or(file.n_traj).unwrap_or(DEFAULT_N_TRAJ),
        seed: config::resolve_seed(args.common.seed, file.seed)?,
        task_settings: settings,
        include_controls: args.include_controls || file.include_controls.unwrap_or(false),
    };
    let prov = Provenance::of("simulate", &cfg)?;
    let out = out_dir(&args.common, &file)?;

    let ds = simulate_dataset(&factory, task.as_str(), &theta, cfg.n_traj, cfg.seed, &SolverSettings::default())?;
    timing.stage("simulate");
    out.write("dataset.json", &dataset_json(&ds, cfg.include_controls, &prov, &cfg.task_settings)?)?;
    out.write_csv("trajectories.csv", &prov, &ds.to_csv())?;
    timing.stage("write");
    timing.write(&out, "simulate")?;

    println!("{task}/{variant} at {theta}: {} trajectories of {} states", ds.trajectories.len(), ds.horizon);
    if ds.trajectories.is_empty() {
        return Ok(());
    }
    let model = factory.build(&theta)?;
    let costs: Vec<f64> = ds
        .trajectories
        .iter()
        .filter_map(|tr| tr.controls.as_ref().map(|us| model.trajectory_cost(&tr.states, us)))
        .collect();
    if !costs.is_empty() {
        let (m, s) = mean_std(&costs);
        let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("cost: mean {m:.4}, sd {s:.4}, min {lo:.4}, max {hi:.4}");
    }
    let ends: Vec<&[f64]> = ds.trajectories.iter().filter_map(|t| t.states.last()).map(|x| x.as_slice()).collect();
    let n = ends.len() as f64;
    let centre: Vec<f64> = (0..ds.n).map(|i| ends.iter().map(|x| x[i]).sum::<f64>() / n).collect();
    let sq: f64 = ends.iter().flat_map(|x| x.iter().zip(&centre).map(|(a, b)| (a - b).powi(2))).sum();
    let spread = (sq / n).sqrt();
    println!("endpoint spread (rms distance to mean final state): {spread:.4}");
    Ok(())
}

#[derive(Serialize)]
struct FitConfig {
    dataset_sha256: String,
    task: &'static str,
    variant: Variant,
    method: Method,
    restarts: usize,
    seed: u64,
    ranges: BTreeMap<String, [f64; 2]>,
    task_settings: TaskSettings,
}

fn read_dataset(path: &Path) -> Result<(Dataset, Value, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NiocError::Io(format!("cannot read dataset {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| NiocError::Json(format!("dataset {}: {e}", path.display())))?;
    let ds = Dataset::from_json(&text).map_err(|e| match e {
        NiocError::Json(m) => NiocError::Json(format!("dataset {}: {m}", path.display())),
        other => other,
    })?;
    let hash = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    Ok((ds, value, hash))
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let mut timing = Timing::start();
    let file = load(&args.common)?;
    let (ds, doc, dataset_sha256) = read_dataset(&args.dataset)?;
    let task: TaskId = ds.task.parse()?;
    if let Some(t) = &file.task {
        if config::parse_task(t)? != task {
            return Err(NiocError::InvalidInput(format!("config task '{t}' does not match dataset task '{task}'")));
        }
    }
    let stored: TaskSettings = match doc.get("meta").and_then(|m| m.get("task_settings")) {
        Some(v) => serde_json::from_value(v.clone())?,
        None => TaskSettings::default(),
    };
    let cfg = FitConfig {
        dataset_sha256,
        task: task.as_str(),
        variant: variant_or(&args.variant, &file, ds.variant)?,
        method: match args.method.as_deref().or(file.method.as_deref()) {
            Some(s) => config::parse_method(s)?,
            None => Method::Ours,
        },
        restarts: args.restarts.or(file.restarts).unwrap_or(DEFAULT_RESTARTS),
        seed: config::resolve_seed(args.common.seed, file.seed)?,
        ranges: ranges(&args.ranges, &file)?,
        task_settings: task_settings(&args.common, &file, stored),
    };
    let factory = TaskFactory::new(task, cfg.variant, TaskConfig::from(&cfg.task_settings))?;
    let horizon = factory.build(&ParamVector::defaults(&factory.param_specs()))?.horizon;
    if !ds.trajectories.is_empty() && horizon != ds.horizon {
        return Err(NiocError::InvalidInput(format!(
            "dataset has T={} but the task model has T={horizon}; pass --horizon",
            ds.horizon
        )));
    }
    let prov = Provenance::of("fit", &cfg)?;
    let out = out_dir(&args.common, &file)?;
    let settings = FitSettings {
        restarts: cfg.restarts,
        seed: cfg.seed,
        ranges: range_list(&cfg.ranges),
        ..FitSettings::default()
    };
    let result = run_fit(&factory, &ds.trajectories, cfg.method, &settings)?;
    timing.add("fit", result.wall_time_s);

    let truth = ParamVector::from_named(&factory.param_specs(), &ds.theta_true.0).ok();
    let errors = truth.as_ref().map(|t| relative_errors(t, &result.theta_hat));
    let (errors_json, med) = match &errors {
        Some(Ok(e)) => (serde_json::to_value(e)?, median(e.iter().map(|r| r.abs_rel_err))),
        Some(Err(err)) => (json!({ "unavailable": err.to_string() }), None),
        None => (Value::Null, None),
    };
    out.write_json(
        "fit.json",
        &json!({
            "meta": prov.json(),
            "task": task.as_str(),
            "variant": cfg.variant,
            "n_trajectories": ds.trajectories.len(),
            "theta_true": ds.theta_true,
            "fit": result.summary(),
            "relative_errors": errors_json,
        }),
    )?;
    timing.write(&out, "fit")?;
    let med = med.map_or("n/a".to_string(), |m| format!("{m:.3}"));
    println!(
        "{} fit of {task}/{}: {} | log-lik {:.4} | median abs rel error {med}",
        cfg.method, cfg.variant, result.theta_hat, result.loglik
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchmarkConfig {
    task: &'static str,
    variant: Variant,
    methods: Vec<Method>,
    n_datasets: usize,
    n_traj: usize,
    restarts: usize,
    seed: u64,
    ranges: BTreeMap<String, [f64; 2]>,
    task_settings: TaskSettings,
}

pub const AGGREGATION: &str = "pooled median of absolute relative errors over all (dataset, parameter) pairs";

fn summary_json(report: &EvalReport, cfg: &BenchmarkConfig, prov: &Provenance) -> Value {
    let per_method: Vec<Value> = cfg
        .methods
        .iter()
        .map(|&m| {
            let rows: Vec<_> = report.rows.iter().filter(|r| r.method == m).collect();
            let mut names: Vec<&str> = Vec::new();
            for r in &rows {
                if !names.contains(&r.param_name.as_str()) {
                    names.push(&r.param_name);
                }
            }
            let per_param: serde_json::Map<String, Value> = names
                .iter()
                .map(|n| {
                    let med = median(rows.iter().filter(|r| r.param_name == *n).map(|r| r.abs_rel_err));
                    (n.to_string(), opt_json(med))
                })
                .collect();
            json!({
                "method": m,
                "pooled_median": opt_json(report.pooled_median(m)),
                "median_of_dataset_medians": opt_json(report.median_of_dataset_medians(m)),
                "per_parameter_median": per_param,
                "n_rows": rows.len(),
            })
        })
        .collect();
    json!({
        "meta": prov.json(),
        "task": cfg.task,
        "variant": cfg.variant,
        "aggregation": AGGREGATION,
        "methods": per_method,
        "failures": report.failures,
    })
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<()> {
    let mut timing = Timing::start();
    let file = load(&args.common)?;
    let task = required_task(&args.task, &file)?;
    let cfg = BenchmarkConfig {
        task: task.as_str(),
        variant: variant_or(&args.variant, &file, default_variant(task))?,
        methods: methods(&args.methods, &file, &[Method::Ours])?,
        n_datasets: args.n_datasets.or(file.n_datasets).unwrap_or(DEFAULT_N_DATASETS),
        n_traj: args.n_traj.or(file.n_traj).unwrap_or(DEFAULT_N_TRAJ),
        restarts: args.restarts.or(file.restarts).unwrap_or(DEFAULT_RESTARTS),
        seed: config::resolve_seed(args.common.seed, file.seed)?,
        ranges: ranges(&args.ranges, &file)?,
        task_settings: task_settings(&args.common, &file, TaskSettings::default()),
    };
    let prov = Provenance::of("benchmark", &cfg)?;
    let out = out_dir(&args.common, &file)?;
    let settings = BenchmarkSettings {
        task,
        variant: cfg.variant,
        methods: cfg.methods.clone(),
        n_datasets: cfg.n_datasets,
        n_traj: cfg.n_traj,
        seed: cfg.seed,
        config: TaskConfig::from(&cfg.task_settings),
        solver: SolverSettings::default(),
        fit: FitSettings {
            restarts: cfg.restarts,
            ranges: range_list(&cfg.ranges),
            ..FitSettings::default()
        },
    };
    let report = run_benchmark(&settings)?;
    timing.stage("benchmark");
    for f in &report.failures {
        let method = f.method.map_or("simulation".to_string(), |m| m.to_string());
        eprintln!("warning: dataset {} ({method}) failed: {}", f.dataset_id, f.message);
    }
    let header = format!("# aggregation={AGGREGATION}\n");
    out.write_csv("eval.csv", &prov, &format!("{header}{}", report.to_csv(false)))?;
    if args.with_times {
        out.write_csv("eval_timed.csv", &prov, &format!("{header}{}", report.to_csv(true)))?;
    }
    out.write_json("summary.json", &summary_json(&report, &cfg, &prov))?;
    let mut seen = Vec::new();
    for r in &report.rows {
        if !seen.contains(&(r.dataset_id, r.method)) {
            seen.push((r.dataset_id, r.method));
            timing.add(format!("fit dataset {} {}", r.dataset_id, r.method), r.wall_time_s);
        }
    }
    timing.write(&out, "benchmark")?;

    for &m in &cfg.methods {
        let pooled = report.pooled_median(m).map_or("n/a".into(), |v| format!("{v:.3}"));
        println!("{task}/{} {m}: pooled median abs rel error {pooled}", cfg.variant);
    }
    if !report.failures.is_empty() {
        println!("{} failures (see summary.json)", report.failures.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct StudyConfig {
    c_grid: Vec<f64>,
    sigma: f64,
    p: f64,
    n_traj: usize,
    restarts: usize,
    methods: Vec<Method>,
    seed: u64,
    task_settings: TaskSettings,
}

pub const STUDY_HEADER: &str = "agent,c_true,sigma_true,p_true,detour,method,sigma_hat,c_hat,p_hat,loglik";

/// How far the mean path overshoots towards the light, in x₁: the largest
/// mean x₁ minus the larger of its start and end values.
pub fn detour(ds: &Dataset) -> f64 {
    let k = ds.trajectories.len();
    if k == 0 {
        return f64::NAN;
    }
    let mean: Vec<f64> = (0..ds.horizon)
        .map(|t| ds.trajectories.iter().map(|tr| tr.states[t][0]).sum::<f64>() / k as f64)
        .collect();
    let peak = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    peak - mean[0].max(mean[ds.horizon - 1])
}

pub fn lightdark_study(args: &StudyArgs) -> Result<()> {
    let mut timing = Timing::start();
    let file = load(&args.common)?;
    if let Some(t) = &file.task {
        if config::parse_task(t)? != TaskId::LightDark {
            return Err(NiocError::InvalidInput(format!("lightdark-study runs on the lightdark task, config names '{t}'")));
        }
    }
    let c_grid = match (&args.c_grid, &file.c_grid) {
        (Some(s), _) => config::parse_grid(s)?,
        (None, Some(g)) => g.clone(),
        (None, None) => vec![0.0],
    };
    if c_grid.is_empty() {
        return Err(NiocError::InvalidInput("empty c grid".into()));
    }
    let cfg = StudyConfig {
        c_grid,
        sigma: args.sigma.or(file.sigma).unwrap_or(0.2),
        p: args.p.or(file.p).unwrap_or(0.0),
        n_traj: args.n_traj.or(file.n_traj).unwrap_or(DEFAULT_N_TRAJ),
        restarts: args.restarts.or(file.restarts).unwrap_or(DEFAULT_RESTARTS),
        methods: methods(&args.methods, &file, &[Method::Ours, Method::Baseline])?,
        seed: config::resolve_seed(args.common.seed, file.seed)?,
        task_settings: task_settings(&args.common, &file, TaskSettings::default()),
    };
    let prov = Provenance::of("lightdark-study", &cfg)?;
    let out = out_dir(&args.common, &file)?;
    let task_config = TaskConfig::from(&cfg.task_settings);
    // the researcher's model is always the partially observable agent
    let fit_factory = TaskFactory::new(TaskId::LightDark, Variant::Partial, task_config.clone())?;

    let mut csv = format!("{STUDY_HEADER}\n");
    let mut cell = 0u64;
    for (ci, &c) in cfg.c_grid.iter().enumerate() {
        for (agent, variant) in [("po", Variant::Partial), ("fo", Variant::PartialFo)] {
            let gen = TaskFactory::new(TaskId::LightDark, variant, task_config.clone())?;
            let named = vec![("sigma".to_string(), cfg.sigma), ("c".to_string(), c), ("p".to_string(), cfg.p)];
            let theta = ParamVector::from_named(&gen.param_specs(), &named)?;
            let ds = simulate_dataset(&gen, "lightdark", &theta, cfg.n_traj, mix_seed(cfg.seed, 2 * cell), &SolverSettings::default())?;
            let fit_seed = mix_seed(cfg.seed, 2 * cell + 1);
            cell += 1;
            out.write_csv(&format!("trajectories_{agent}_c{ci}.csv"), &prov, &ds.to_csv())?;
            let d = detour(&ds);
            let settings = FitSettings {
                restarts: cfg.restarts,
                seed: fit_seed,
                ..FitSettings::default()
            };
            for &m in &cfg.methods {
                let prefix = format!("{agent},{c},{},{},{d},{m}", cfg.sigma, cfg.p);
                match run_fit(&fit_factory, &ds.trajectories, m, &settings) {
                    Ok(r) => {
                        timing.add(format!("fit {agent} c={c} {m}"), r.wall_time_s);
                        let s = r.theta_hat.get("sigma")?;
                        let ch = r.theta_hat.get("c")?;
                        let ph = r.theta_hat.get("p")?;
                        csv.push_str(&format!("{prefix},{s},{ch},{ph},{}\n", r.loglik));
                        println!("{agent} c={c} detour {d:.3} | {m}: sigma {s:.4}, c {ch:.3e}, p {ph:.4}");
                    }
                    Err(e) => {
                        eprintln!("warning: {agent} c={c} {m} failed: {e}");
                        csv.push_str(&format!("{prefix},NA,NA,NA,NA\n"));
                    }
                }
            }
        }
    }
    out.write_csv("study.csv", &prov, &csv)?;
    timing.write(&out, "lightdark-study")?;
    Ok(())
}
