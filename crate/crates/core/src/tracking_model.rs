//! Bearing-only tracking benchmark: constant-velocity dynamics driven by
//! white acceleration noise, a bearing sensor at the origin, and the
//! position-error metric.
//!
//! The state is `[x1, x2, x3, x4]` = `[pos_x, vel_x, pos_y, vel_y]`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle_core::ParticleSet;

pub type State = [f64; 4];

/// Constants of the tracking plant and the filter prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingScenario {
    /// Sampling period.
    #[serde(rename = "T")]
    pub period: f64,
    pub sigma_v1: f64,
    pub sigma_v2: f64,
    /// Bearing noise, radians.
    pub sigma_w: f64,
    pub x0_truth: State,
    pub prior_mean: State,
    pub prior_std: State,
    pub num_steps: usize,
}

impl Default for TrackingScenario {
    fn default() -> Self {
        TrackingScenario {
            period: 1.0,
            sigma_v1: 0.001,
            sigma_v2: 0.001,
            sigma_w: 0.005,
            x0_truth: [-0.05, 0.001, 0.7, -0.055],
            prior_mean: [0.0, 0.0, 0.4, -0.05],
            prior_std: [0.5, 0.005, 0.3, 0.01],
            num_steps: 50,
        }
    }
}

impl TrackingScenario {
    /// Zero process and prior spreads are accepted so that degenerate
    /// configurations can be expressed; the bearing noise must be positive.
    pub fn validate(&self) -> Result<()> {
        let finite_state = |s: &State| s.iter().all(|x| x.is_finite());
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::config(format!(
                "T must be positive, got {}",
                self.period
            )));
        }
        if !(self.sigma_w > 0.0 && self.sigma_w.is_finite()) {
            return Err(Error::config(format!(
                "sigma_w must be positive, got {}",
                self.sigma_w
            )));
        }
        for (name, s) in [("sigma_v1", self.sigma_v1), ("sigma_v2", self.sigma_v2)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be non-negative, got {s}"
                )));
            }
        }
        if !self.prior_std.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(Error::config("prior_std entries must be non-negative"));
        }
        if !finite_state(&self.x0_truth) || !finite_state(&self.prior_mean) {
            return Err(Error::config("x0_truth and prior_mean must be finite"));
        }
        if self.num_steps == 0 {
            return Err(Error::config("num_steps must be at least 1"));
        }
        Ok(())
    }

    /// Draws `[v1, v2]` for one transition.
    pub fn sample_process_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        [
            gaussian(0.0, self.sigma_v1, rng),
            gaussian(0.0, self.sigma_v2, rng),
        ]
    }

    pub fn sample_bearing_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        gaussian(0.0, self.sigma_w, rng)
    }

    /// One transition with freshly drawn process noise.
    pub fn propagate<R: Rng + ?Sized>(&self, state: &State, rng: &mut R) -> State {
        let noise = self.sample_process_noise(rng);
        cv_transition(state, noise, self)
    }
}

fn gaussian<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    // Normal::new only fails for negative or non-finite std, excluded by validate().
    Normal::new(mean, std)
        .expect("standard deviation validated as finite and non-negative")
        .sample(rng)
}

/// `F x + G v` for the constant-velocity model with sampling period `T`.
pub fn cv_transition(state: &State, noise: [f64; 2], scenario: &TrackingScenario) -> State {
    let t = scenario.period;
    let half_t2 = 0.5 * t * t;
    let [x1, x2, x3, x4] = *state;
    let [v1, v2] = noise;
    [
        x1 + t * x2 + half_t2 * v1,
        x2 + t * v1,
        x3 + t * x4 + half_t2 * v2,
        x4 + t * v2,
    ]
}

/// Noiseless bearing of the target from the origin, measured from the
/// y-axis: `atan2(x1, x3)`.
pub fn bearing(state: &State) -> Result<f64> {
    let (x1, x3) = (state[0], state[2]);
    if x1 == 0.0 && x3 == 0.0 {
        return Err(Error::UndefinedBearing);
    }
    Ok(x1.atan2(x3))
}

pub fn bearing_observe(state: &State, noise: f64, _scenario: &TrackingScenario) -> Result<f64> {
    Ok(bearing(state)? + noise)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Gaussian log-likelihood of a bearing observation, without the
/// normalizing constant.
pub fn bearing_log_likelihood(
    theta_obs: f64,
    state: &State,
    scenario: &TrackingScenario,
) -> Result<f64> {
    let residual = wrap_angle(theta_obs - bearing(state)?);
    Ok(-0.5 * (residual / scenario.sigma_w).powi(2))
}

/// `n` independent draws from the per-component Gaussian prior, equally
/// weighted.
pub fn sample_initial_particles<R: Rng + ?Sized>(
    n: usize,
    scenario: &TrackingScenario,
    rng: &mut R,
) -> Result<ParticleSet<4>> {
    if n == 0 {
        return Err(Error::domain("initial particle count must be positive"));
    }
    let states = (0..n)
        .map(|_| {
            let mut s = [0.0; 4];
            for (j, x) in s.iter_mut().enumerate() {
                *x = gaussian(scenario.prior_mean[j], scenario.prior_std[j], rng);
            }
            s
        })
        .collect();
    ParticleSet::uniform(states)
}

/// Ground-truth trajectory and its noisy bearings.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub states: Vec<State>,
    pub measurements: Vec<f64>,
}

/// Starting from `x0_truth`, `num_steps` transitions each followed by one
/// bearing measurement. The initial state itself is not part of the output.
pub fn simulate_truth<R: Rng + ?Sized>(scenario: &TrackingScenario, rng: &mut R) -> Result<Truth> {
    let mut states = Vec::with_capacity(scenario.num_steps);
    let mut measurements = Vec::with_capacity(scenario.num_steps);
    let mut x = scenario.x0_truth;
    for _ in 0..scenario.num_steps {
        x = scenario.propagate(&x, rng);
        let w = scenario.sample_bearing_noise(rng);
        measurements.push(bearing_observe(&x, w, scenario)?);
        states.push(x);
    }
    Ok(Truth {
        states,
        measurements,
    })
}

/// Euclidean distance between the x-y positions; velocities are ignored.
pub fn position_error(estimate: &State, truth: &State) -> f64 {
    (truth[0] - estimate[0]).hypot(truth[2] - estimate[2])
}
