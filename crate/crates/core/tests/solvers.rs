mod common;

use nalgebra::{DMatrix, DVector};
use nioc::envs::linear::LinearGaussian;
use nioc::envs::{instantiate, TaskConfig, TaskId};
use nioc::model::{ParamVector, PomdpModel, Variant};
use nioc::solvers::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn linear_model(sys: LinearGaussian, variant: Variant, horizon: usize, alpha: f64) -> PomdpModel<LinearGaussian> {
    let n = sys.a.nrows();
    PomdpModel::new(sys, variant, horizon, DVector::from_element(n, 1.0), alpha)
}

fn task_model(task: TaskId, variant: Variant, overrides: &[(&str, f64)]) -> PomdpModel<nioc::envs::TaskSystem> {
    let specs = task.param_specs(variant);
    let named: Vec<(String, f64)> = overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let theta = ParamVector::defaults(&specs).overridden(&named).unwrap();
    instantiate(task, &theta, variant, &TaskConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_pass_matches_riccati(seed in any::<u64>(), n in 1usize..=4, nu in 1usize..=4, horizon in 2usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = LinearGaussian::random(&mut rng, n, nu, 1);
        let model = linear_model(sys.clone(), Variant::Full, horizon, 0.0);
        let xs: Vec<_> = (0..horizon).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let us: Vec<_> = (1..horizon).map(|_| DVector::from_fn(nu, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let law = backward_pass(&model, &xs, &us, None).unwrap();
        let (gains, curv) = common::riccati(&sys, horizon - 1);
        for t in 0..horizon - 1 {
            let scale = gains[t].amax().max(1.0);
            prop_assert!((&law.gains[t] - &gains[t]).amax() <= 1e-8 * scale);
            prop_assert!((&law.quu[t] - &curv[t]).amax() <= 1e-8 * curv[t].amax());
        }
    }

    #[test]
    fn ekf_on_linear_system_is_kalman_filter(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = LinearGaussian::random(&mut rng, n, 2, m);
        let mut model = linear_model(sys.clone(), Variant::Partial, 12, 0.0);
        model.belief_cov = DMatrix::identity(n, n) * 0.5;
        let us: Vec<_> = (0..11).map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let ys: Vec<_> = (0..11).map(|_| DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let xs = model.rollout(&us);
        let gains = filter_pass(&model, &xs, &us).unwrap();
        let b1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let (_, oracle) = common::kalman_predictor(&sys, &model.belief_cov, &b1, &us, &ys);
        let mut b = b1;
        for t in 0..11 {
            b = ekf_step(&model, &b, &us[t], &ys[t], &gains.gains[t]).unwrap();
            let scale = oracle[t + 1].amax().max(1.0);
            prop_assert!((&b - &oracle[t + 1]).amax() <= 1e-10 * scale, "step {} differs", t);
        }
    }

    #[test]
    fn accepted_iterations_do_not_increase_noiseless_cost(seed in any::<u64>()) {
        // without noise the line-search objective is the deterministic cost
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c_a = 10f64.powf(rng.gen_range(-2.0..0.0));
        let c_v = 10f64.powf(rng.gen_range(-2.0..0.0));
        let model = task_model(TaskId::Pendulum, Variant::Full, &[("c_a", c_a), ("c_v", c_v), ("sigma_m", 0.0)]);
        let mut last = f64::INFINITY;
        for iters in 1..8 {
            let sol = ilqg_solve(&model, &SolverSettings { max_iter: iters, ..SolverSettings::default() }).unwrap();
            prop_assert!(sol.cost <= last + 1e-12);
            last = sol.cost;
        }
    }
}

#[test]
fn long_horizon_gains_approach_stationary_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sys = LinearGaussian::random(&mut rng, 3, 2, 1);
    let model = linear_model(sys.clone(), Variant::Full, 300, 0.0);
    let xs = vec![DVector::zeros(3); 300];
    let us = vec![DVector::zeros(2); 299];
    let law = backward_pass(&model, &xs, &us, None).unwrap();
    let stationary = common::stationary_gain(&sys);
    assert!((&law.gains[0] - &stationary).amax() < 1e-8 * stationary.amax().max(1.0));
    assert!((&law.gains[298] - &stationary).amax() > (&law.gains[0] - &stationary).amax());
}

#[test]
fn lqr_converges_in_two_iterations_to_riccati_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sys = LinearGaussian::random(&mut rng, 3, 2, 1);
    let model = linear_model(sys.clone(), Variant::Full, 20, 0.0);
    let sol = ilqg_solve(&model, &SolverSettings::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.iterations <= 2, "took {} iterations", sol.iterations);
    let (gains, _) = common::riccati(&sys, 19);
    let mut x = model.x1.clone();
    for t in 0..19 {
        assert!((&sol.law.gains[t] - &gains[t]).amax() < 1e-8 * gains[t].amax().max(1.0));
        let u = &gains[t] * &x;
        assert!((&sol.controls[t] - &u).amax() < 1e-8);
        x = &sys.a * &x + &sys.b * u;
    }
}

#[test]
fn policy_samples_have_temperature_scaled_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sys = LinearGaussian::random(&mut rng, 3, 2, 1);
    let model = linear_model(sys, Variant::Full, 5, 0.5);
    let sol = ilqg_solve(&model, &SolverSettings::default()).unwrap();
    let b = DVector::from_vec(vec![0.3, -0.2, 0.1]);
    let mean = sol.law.mean_control(1, &b);
    let n_samples = 100_000;
    let mut cov = DMatrix::<f64>::zeros(2, 2);
    for _ in 0..n_samples {
        let xi = DVector::from_fn(2, |_, _| rng.sample(StandardNormal));
        let d = mce_policy_sample(&sol.law, 1, &b, &xi) - &mean;
        cov += &d * d.transpose();
    }
    cov /= n_samples as f64;
    let expected = sol.law.quu[1].clone().try_inverse().unwrap() * 0.5;
    for i in 0..2 {
        assert!((cov[(i, i)] / expected[(i, i)] - 1.0).abs() < 0.03);
    }
    let off = expected[(0, 1)] / (expected[(0, 0)] * expected[(1, 1)]).sqrt();
    let off_hat = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
    assert!((off - off_hat).abs() < 0.03);
}

#[test]
fn zero_policy_noise_gives_mean_control() {
    let model = task_model(TaskId::Navigation, Variant::Full, &[]);
    let sol = ilqg_solve(&model, &SolverSettings::default()).unwrap();
    let b = sol.states[3].clone();
    let u = mce_policy_sample(&sol.law, 3, &b, &DVector::zeros(2));
    assert_eq!(u, sol.law.mean_control(3, &b));
    assert!((sol.law.mean_control(3, &sol.law.x_nom[3]) - (&sol.law.offsets[3] + &sol.law.u_nom[3])).amax() < 1e-15);
}

#[test]
fn vanishing_temperature_collapses_policy() {
    let model = task_model(TaskId::Navigation, Variant::Full, &[]);
    let mut cold = model.clone();
    cold.alpha = 0.0;
    let sol = ilqg_solve(&cold, &SolverSettings::default()).unwrap();
    for f in &sol.law.noise_factors {
        assert_eq!(f.amax(), 0.0);
    }
    let xi = DVector::from_vec(vec![3.0, -2.0]);
    let b = sol.states[0].clone();
    assert_eq!(mce_policy_sample(&sol.law, 0, &b, &xi), sol.law.mean_control(0, &b));
}

#[test]
fn control_hessians_are_positive_definite() {
    for task in TaskId::ALL {
        let variant = if task == TaskId::LightDark { Variant::Partial } else { Variant::Full };
        let model = task_model(task, variant, &[]);
        let sol = ilqg_solve(&model, &SolverSettings::default()).unwrap();
        for q in &sol.law.quu {
            assert!((q - q.transpose()).amax() < 1e-12);
            assert!(nioc::math::linalg::min_eigenvalue(q) >= 1e-8 * (1.0 - 1e-9));
        }
    }
}

#[test]
fn controller_is_no_worse_than_doing_nothing() {
    for task in TaskId::ALL {
        let variant = if task == TaskId::LightDark { Variant::Partial } else { Variant::Full };
        let model = task_model(task, variant, &[]);
        let sol = ilqg_solve(&model, &SolverSettings::default()).unwrap();
        let zeros = vec![DVector::zeros(model.dims().nu); model.horizon - 1];
        let idle = model.trajectory_cost(&model.rollout(&zeros), &zeros);
        assert!(sol.cost <= idle, "{task}: {} > {}", sol.cost, idle);
    }
}

#[test]
fn pendulum_swings_up() {
    let model = task_model(TaskId::Pendulum, Variant::Full, &[]);
    let sol = ilqg_solve(&model, &SolverSettings::default()).unwrap();
    let angle = sol.states.last().unwrap()[0];
    let wrapped = (angle + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    assert!(wrapped.abs() < 0.1, "final angle {angle}");
}

fn mean_path(model: &PomdpModel<nioc::envs::TaskSystem>, n_traj: usize) -> Vec<DVector<f64>> {
    let sol = ilqg_solve(model, &SolverSettings::default()).unwrap();
    let trajs = simulate(model, &sol.law, sol.filter.as_ref(), n_traj, 4).unwrap();
    let mut mean = vec![DVector::zeros(model.dims().n); model.horizon];
    for tr in &trajs {
        for (m, x) in mean.iter_mut().zip(&tr.states) {
            *m += x / n_traj as f64;
        }
    }
    mean
}

#[test]
fn lightdark_partial_agent_detours_towards_light() {
    let model = task_model(TaskId::LightDark, Variant::Partial, &[("c", 0.0), ("sigma", 0.2), ("p", 0.0)]);
    let mean = mean_path(&model, 50);
    let max_x = mean.iter().map(|x| x[0]).fold(f64::MIN, f64::max);
    let start = mean[0][0];
    let end = mean.last().unwrap()[0];
    assert!(max_x > start && max_x > end, "max {max_x}, start {start}, end {end}");
}

#[test]
fn lightdark_fully_observable_controller_goes_straight() {
    let model = task_model(TaskId::LightDark, Variant::PartialFo, &[("c", 0.0), ("sigma", 0.2), ("p", 0.0)]);
    let mean = mean_path(&model, 50);
    let max_x = mean.iter().map(|x| x[0]).fold(f64::MIN, f64::max);
    assert!(max_x <= mean[0][0] + 1e-2);
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let model = task_model(TaskId::Navigation, Variant::Partial, &[]);
    let sol = ilqg_solve(&model, &SolverSettings::default()).unwrap();
    let a = simulate(&model, &sol.law, sol.filter.as_ref(), 6, 42).unwrap();
    let b = simulate(&model, &sol.law, sol.filter.as_ref(), 6, 42).unwrap();
    let c = simulate(&model, &sol.law, sol.filter.as_ref(), 6, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(simulate(&model, &sol.law, sol.filter.as_ref(), 0, 42).unwrap().is_empty());
    for (k, tr) in a.iter().enumerate() {
        assert_eq!(tr.seed, mix_seed(42, k as u64));
        assert_eq!(*tr, simulate_trajectory(&model, &sol.law, sol.filter.as_ref(), tr.seed).unwrap());
    }
}

#[test]
fn reaching_endpoint_spread_grows_with_motor_noise() {
    let spread = |sigma_m: f64| {
        let model = task_model(TaskId::Reaching, Variant::Full, &[("sigma_m", sigma_m)]);
        let sol = ilqg_solve(&model, &SolverSettings::default()).unwrap();
        let trajs = simulate(&model, &sol.law, None, 50, 9).unwrap();
        let ends: Vec<[f64; 2]> = trajs
            .iter()
            .map(|t| nioc::envs::reaching::forward_kinematics(t.states.last().unwrap().as_slice()))
            .collect();
        let mx = ends.iter().map(|e| e[0]).sum::<f64>() / 50.0;
        let my = ends.iter().map(|e| e[1]).sum::<f64>() / 50.0;
        ends.iter().map(|e| (e[0] - mx).powi(2) + (e[1] - my).powi(2)).sum::<f64>() / 50.0
    };
    assert!(spread(0.5) > spread(0.05));
}
