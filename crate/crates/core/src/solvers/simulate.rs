use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{NiocError, Result};
use crate::math::linalg::psd_factor;
use crate::model::{PomdpModel, System, Trajectory};

use super::{ControlLaw, FilterGains};

/// Per-trajectory seed: SplitMix64 output for state `seed + (index+1)·γ`
/// with γ the 64-bit golden-ratio increment.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample of the maximum-entropy policy `L_t(b − x̄_t) + m_t + ū_t − C_t ξ`.
pub fn mce_policy_sample(law: &ControlLaw, t: usize, b: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
    law.mean_control(t, b) - &law.noise_factors[t] * xi
}

fn normals(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| rng.sample(StandardNormal))
}

/// One closed-loop rollout.
///
/// With `filter` the agent acts on its EKF belief, whose initial mean is
/// drawn around the start state with the model's belief covariance;
/// otherwise it acts on the true state. Random draws per step are, in order,
/// policy noise ξ, motor noise v and observation noise w.
pub fn simulate_trajectory<S: System>(
    model: &PomdpModel<S>,
    law: &ControlLaw,
    filter: Option<&FilterGains>,
    seed: u64,
) -> Result<Trajectory> {
    let d = model.dims();
    let steps = law.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = model.x1.clone();
    let mut b = match filter {
        Some(_) => &model.x1 + psd_factor(&model.belief_cov) * normals(&mut rng, d.n),
        None => model.x1.clone(),
    };
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    states.push(x.clone());
    for t in 0..steps {
        let xi = normals(&mut rng, d.nu);
        let v = normals(&mut rng, d.nv);
        let w = normals(&mut rng, d.nw);
        let u = mce_policy_sample(law, t, if filter.is_some() { &b } else { &x }, &xi);
        if let Some(f) = filter {
            let y = model.observe(&x, &w);
            b = model.step_mean(&b, &u) + &f.gains[t] * (y - model.observe_mean(&b));
        }
        x = model.step(&x, &u, &v);
        if x.iter().chain(u.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(NiocError::non_finite(format!(
                "simulated trajectory with seed {seed} at step {t}"
            )));
        }
        states.push(x.clone());
        controls.push(u);
    }
    Ok(Trajectory {
        states,
        controls: Some(controls),
        seed,
    })
}

/// `n_traj` independent rollouts, trajectory `k` seeded with
/// `mix_seed(seed, k)`; output is ordered by index regardless of scheduling.
pub fn simulate<S: System>(
    model: &PomdpModel<S>,
    law: &ControlLaw,
    filter: Option<&FilterGains>,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..n_traj as u64)
        .into_par_iter()
        .map(|k| simulate_trajectory(model, law, filter, mix_seed(seed, k)))
        .collect()
}
