//! Bootstrap particle filter loop. Prediction, weighting and estimation are
//! shared by all three arms; only the sample-size step differs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::particle_core::ParticleSet;
use crate::resampling::{
    exp_normalized, fixed_resample, kld_resample, kld_sampling_predict, ResampleMethod,
};
use crate::tracking_model::{bearing_log_likelihood, State, TrackingScenario};

#[derive(Debug, Clone)]
pub struct FilterState {
    pub set: ParticleSet<4>,
    pub step: usize,
    pub method: ResampleMethod,
}

/// Per-step filter output: the point estimate and the particle count carried
/// forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub estimate: State,
    pub n_used: usize,
}

impl FilterState {
    pub fn new(set: ParticleSet<4>, method: ResampleMethod) -> Result<Self> {
        method.validate(4)?;
        Ok(FilterState {
            set,
            step: 0,
            method,
        })
    }

    /// Advances one time step with the configured method.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        measurement: f64,
        scenario: &TrackingScenario,
        rng: &mut R,
    ) -> Result<StepOutput> {
        match self.method {
            ResampleMethod::KldSampling { .. } => {
                self.step_kld_sampling(measurement, scenario, rng)
            }
            _ => self.step_fixed_or_kld_resampling(measurement, scenario, rng),
        }
    }

    /// Propagate, weight, estimate, then resample (fixed size or
    /// KLD-resampling). Resampling runs at every step.
    pub fn step_fixed_or_kld_resampling<R: Rng + ?Sized>(
        &mut self,
        measurement: f64,
        scenario: &TrackingScenario,
        rng: &mut R,
    ) -> Result<StepOutput> {
        if matches!(self.method, ResampleMethod::KldSampling { .. }) {
            return Err(Error::Contract(
                "KLD-sampling filters must use step_kld_sampling".into(),
            ));
        }
        let step = self.step;

        let predicted: Vec<State> = self
            .set
            .states()
            .map(|s| scenario.propagate(s, rng))
            .collect();
        let log_weights = predicted
            .iter()
            .zip(self.set.weights())
            .map(|(s, w)| Ok(bearing_log_likelihood(measurement, s, scenario)? + w.ln()))
            .collect::<Result<Vec<f64>>>()?;
        let weights = exp_normalized(&log_weights).map_err(|e| e.at_step(step))?;

        let mut posterior = ParticleSet::uniform(predicted)?;
        posterior.set_weights(weights)?;
        posterior.normalize_weights().map_err(|e| e.at_step(step))?;
        let estimate = posterior.weighted_mean()?;

        self.set = match &self.method {
            ResampleMethod::Fixed { n } => fixed_resample(&posterior, *n, rng)?,
            ResampleMethod::KldResampling { bound, bins } => {
                kld_resample(&posterior, bound, bins, rng)?
            }
            ResampleMethod::KldSampling { .. } => unreachable!("rejected above"),
        };
        self.step += 1;
        Ok(StepOutput {
            estimate,
            n_used: self.set.len(),
        })
    }

    /// KLD-sampling step: adaptive draw-propagate-weight, normalize,
    /// estimate. The weighted set is carried forward without resampling.
    pub fn step_kld_sampling<R: Rng + ?Sized>(
        &mut self,
        measurement: f64,
        scenario: &TrackingScenario,
        rng: &mut R,
    ) -> Result<StepOutput> {
        let ResampleMethod::KldSampling { bound, bins } = &self.method else {
            return Err(Error::Contract(
                "step_kld_sampling needs a KLD-sampling filter".into(),
            ));
        };
        let step = self.step;

        let mut next = kld_sampling_predict(
            &self.set,
            |s: &State, rng: &mut R| scenario.propagate(s, rng),
            |s: &State| bearing_log_likelihood(measurement, s, scenario),
            bound,
            bins,
            rng,
        )
        .map_err(|e| e.at_step(step))?;
        next.normalize_weights().map_err(|e| e.at_step(step))?;
        let estimate = next.weighted_mean()?;

        self.set = next;
        self.step += 1;
        Ok(StepOutput {
            estimate,
            n_used: self.set.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle_core::BinConfig;
    use crate::sample_size::SampleSizeBound;
    use crate::tracking_model::{sample_initial_particles, simulate_truth};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kld_resampling() -> ResampleMethod {
        ResampleMethod::KldResampling {
            bound: SampleSizeBound::default(),
            bins: BinConfig::position_2d(),
        }
    }

    fn kld_sampling() -> ResampleMethod {
        ResampleMethod::KldSampling {
            bound: SampleSizeBound::default(),
            bins: BinConfig::position_2d(),
        }
    }

    fn run(method: ResampleMethod, scenario: &TrackingScenario, seed: u64) -> Vec<StepOutput> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = simulate_truth(scenario, &mut rng).unwrap();
        let set = sample_initial_particles(1000, scenario, &mut rng).unwrap();
        let mut fs = FilterState::new(set, method).unwrap();
        truth
            .measurements
            .iter()
            .map(|&z| fs.step(z, scenario, &mut rng).unwrap())
            .collect()
    }

    fn short() -> TrackingScenario {
        TrackingScenario {
            num_steps: 10,
            ..TrackingScenario::default()
        }
    }

    #[test]
    fn fixed_arm_keeps_size() {
        let out = run(ResampleMethod::Fixed { n: 1000 }, &short(), 1);
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|o| o.n_used == 1000));
    }

    #[test]
    fn adaptive_arms_stay_in_bounds() {
        for method in [kld_resampling(), kld_sampling()] {
            let out = run(method, &short(), 2);
            assert!(out.iter().all(|o| (50..=2000).contains(&o.n_used)));
        }
    }

    #[test]
    fn collapsed_particles_use_floor() {
        let mut scenario = short();
        scenario.prior_std = [0.0; 4];
        scenario.sigma_v1 = 0.0;
        scenario.sigma_v2 = 0.0;
        for method in [kld_resampling(), kld_sampling()] {
            let out = run(method, &scenario, 3);
            assert!(out.iter().all(|o| o.n_used == 50), "{out:?}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        for method in [
            ResampleMethod::Fixed { n: 300 },
            kld_resampling(),
            kld_sampling(),
        ] {
            assert_eq!(run(method.clone(), &short(), 4), run(method, &short(), 4));
        }
    }

    #[test]
    fn estimate_is_convex_combination() {
        let scenario = short();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = simulate_truth(&scenario, &mut rng).unwrap();
        let set = sample_initial_particles(500, &scenario, &mut rng).unwrap();
        let mut fs = FilterState::new(set, kld_sampling()).unwrap();
        for &z in &truth.measurements {
            let out = fs.step(z, &scenario, &mut rng).unwrap();
            for j in 0..4 {
                let lo = fs.set.states().map(|s| s[j]).fold(f64::INFINITY, f64::min);
                let hi = fs
                    .set
                    .states()
                    .map(|s| s[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(out.estimate[j] >= lo - 1e-12 && out.estimate[j] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn wrong_step_for_method_is_rejected() {
        let scenario = short();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let set = sample_initial_particles(10, &scenario, &mut rng).unwrap();
        let mut fs = FilterState::new(set.clone(), kld_sampling()).unwrap();
        assert!(matches!(
            fs.step_fixed_or_kld_resampling(0.0, &scenario, &mut rng),
            Err(Error::Contract(_))
        ));
        let mut fs = FilterState::new(set, kld_resampling()).unwrap();
        assert!(matches!(
            fs.step_kld_sampling(0.0, &scenario, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn undefined_bearing_aborts_step() {
        let mut scenario = short();
        scenario.prior_mean = [0.0; 4];
        scenario.prior_std = [0.0; 4];
        scenario.sigma_v1 = 0.0;
        scenario.sigma_v2 = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = sample_initial_particles(10, &scenario, &mut rng).unwrap();
        let mut fs = FilterState::new(set, ResampleMethod::Fixed { n: 10 }).unwrap();
        assert!(matches!(
            fs.step(0.0, &scenario, &mut rng),
            Err(Error::UndefinedBearing)
        ));
    }
}
