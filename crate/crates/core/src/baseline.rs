//! Maximum-causal-entropy IRL baseline: a fully observing agent whose
//! controls are estimated from the states, scored by transition and policy
//! densities of the linearized problem. Observation models are ignored.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{NiocError, Result};
use crate::likelihood::{estimate_controls, support_density, DatasetLogLik};
use crate::model::{ModelFactory, ParamVector, PomdpModel, System, Trajectory};
use crate::solvers::{backward_pass, ControlLaw};

/// Per-step terms of the baseline likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTerms {
    pub transition: Vec<f64>,
    pub policy: Vec<f64>,
}

impl BaselineTerms {
    pub fn total(&self) -> f64 {
        self.transition.iter().sum::<f64>() + self.policy.iter().sum::<f64>()
    }
}

/// Control law of a fully observing agent linearized around `(xs, us)`.
pub fn baseline_law<S: System>(model: &PomdpModel<S>, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Result<ControlLaw> {
    backward_pass(model, xs, us, None)
}

/// Transition and policy log densities with the supplied controls.
pub fn baseline_terms<S: System>(model: &PomdpModel<S>, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Result<BaselineTerms> {
    if model.alpha <= 0.0 {
        return Err(NiocError::InvalidInput(
            "the baseline needs a positive temperature for its policy density".into(),
        ));
    }
    let law = baseline_law(model, xs, us)?;
    let steps = us.len();
    let mut transition = Vec::with_capacity(steps);
    let mut policy = Vec::with_capacity(steps);
    for t in 0..steps {
        let lin = model.linearize_dynamics(&xs[t], &us[t]);
        transition.push(support_density(&lin.value, &lin.f, &xs[t + 1])?.log_density);
        let mean = law.mean_control(t, &xs[t]);
        policy.push(support_density(&mean, &law.noise_factors[t], &us[t])?.log_density);
    }
    Ok(BaselineTerms { transition, policy })
}

/// Baseline log likelihood with known controls.
pub fn baseline_log_likelihood_given_controls<S: System>(
    model: &PomdpModel<S>,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
) -> Result<f64> {
    if xs.len() <= 1 {
        return Ok(0.0);
    }
    if us.len() + 1 != xs.len() {
        return Err(NiocError::DimensionMismatch(format!(
            "{} controls for {} states",
            us.len(),
            xs.len()
        )));
    }
    Ok(baseline_terms(model, xs, us)?.total())
}

/// Baseline log likelihood with controls estimated from the states.
pub fn baseline_log_likelihood<S: System>(model: &PomdpModel<S>, xs: &[DVector<f64>]) -> Result<f64> {
    if xs.len() <= 1 {
        return Ok(0.0);
    }
    let est = estimate_controls(model, xs);
    baseline_log_likelihood_given_controls(model, xs, &est.controls)
}

/// Baseline log likelihood of a dataset. `controls` supplies true or cached
/// estimated controls per trajectory; otherwise they are estimated.
pub fn baseline_dataset_log_likelihood<F: ModelFactory>(
    factory: &F,
    trajectories: &[Trajectory],
    theta: &ParamVector,
    controls: Option<&[Vec<DVector<f64>>]>,
) -> Result<DatasetLogLik> {
    let model = factory.build(theta)?;
    if let Some(c) = controls {
        if c.len() != trajectories.len() {
            return Err(NiocError::DimensionMismatch(format!(
                "{} control sequences for {} trajectories",
                c.len(),
                trajectories.len()
            )));
        }
    }
    let results: Vec<Result<f64>> = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, tr)| match controls {
            Some(c) => baseline_log_likelihood_given_controls(&model, &tr.states, &c[i]),
            None => baseline_log_likelihood(&model, &tr.states),
        })
        .collect();
    Ok(DatasetLogLik::from_results(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::linear::LinearGaussian;
    use crate::model::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(alpha: f64) -> PomdpModel<LinearGaussian> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = LinearGaussian::random(&mut rng, 2, 1, 1);
        PomdpModel::new(sys, Variant::Full, 5, DVector::from_element(2, 1.0), alpha)
    }

    #[test]
    fn zero_temperature_is_rejected() {
        let m = model(0.0);
        let xs = m.rollout(&vec![DVector::zeros(1); 4]);
        assert!(matches!(
            baseline_log_likelihood(&m, &xs),
            Err(NiocError::InvalidInput(_))
        ));
    }

    #[test]
    fn estimated_controls_equal_supplied_estimates() {
        let m = model(0.1);
        let us: Vec<_> = (0..4).map(|t| DVector::from_element(1, 0.1 * t as f64)).collect();
        let mut xs = m.rollout(&us);
        xs[2][0] += 0.05;
        let est = estimate_controls(&m, &xs).controls;
        assert_eq!(
            baseline_log_likelihood(&m, &xs).unwrap(),
            baseline_log_likelihood_given_controls(&m, &xs, &est).unwrap()
        );
    }

    #[test]
    fn control_count_must_match() {
        let m = model(0.1);
        let xs = m.rollout(&vec![DVector::zeros(1); 4]);
        assert!(baseline_log_likelihood_given_controls(&m, &xs, &[DVector::zeros(1)]).is_err());
    }
}
