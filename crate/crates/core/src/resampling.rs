//! Sample-size strategies: fixed multinomial resampling, KLD-resampling and
//! the KLD-sampling baseline.
//!
//! Both adaptive methods draw one particle at a time, record the cell of each
//! draw in a fresh [`BinGrid`], and stop once the number of draws reaches the
//! bound for the current count of occupied cells. They differ in what is
//! binned: KLD-resampling bins draws from the weighted posterior, KLD-sampling
//! bins predicted states before they are weighted.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle_core::{bin_index, BinConfig, BinGrid, Particle, ParticleSet};
use crate::sample_size::{SampleSizeBound, SizeRule};

/// Names of the three filter arms, as used in configs, CLI and file names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    Fixed,
    KldSampling,
    KldResampling,
}

impl MethodTag {
    pub const ALL: [MethodTag; 3] = [
        MethodTag::Fixed,
        MethodTag::KldSampling,
        MethodTag::KldResampling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Fixed => "fixed",
            MethodTag::KldSampling => "kld-sampling",
            MethodTag::KldResampling => "kld-resampling",
        }
    }

    /// Stable small integer used when deriving random streams.
    pub fn id(self) -> u64 {
        match self {
            MethodTag::Fixed => 0,
            MethodTag::KldSampling => 1,
            MethodTag::KldResampling => 2,
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown method {s:?}, expected fixed, kld-sampling or kld-resampling"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResampleMethod {
    Fixed {
        n: usize,
    },
    KldResampling {
        bound: SampleSizeBound,
        bins: BinConfig,
    },
    KldSampling {
        bound: SampleSizeBound,
        bins: BinConfig,
    },
}

impl ResampleMethod {
    pub fn tag(&self) -> MethodTag {
        match self {
            ResampleMethod::Fixed { .. } => MethodTag::Fixed,
            ResampleMethod::KldResampling { .. } => MethodTag::KldResampling,
            ResampleMethod::KldSampling { .. } => MethodTag::KldSampling,
        }
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        match self {
            ResampleMethod::Fixed { n } if *n == 0 => {
                Err(Error::config("fixed sample size must be positive"))
            }
            ResampleMethod::Fixed { .. } => Ok(()),
            ResampleMethod::KldResampling { bound, bins }
            | ResampleMethod::KldSampling { bound, bins } => {
                bound.validate().map_err(|e| Error::config(e.to_string()))?;
                bins.validate(state_dim)
            }
        }
    }

    /// Inclusive range every post-step particle count must fall in.
    pub fn size_range(&self) -> (usize, usize) {
        match self {
            ResampleMethod::Fixed { n } => (*n, *n),
            ResampleMethod::KldResampling { bound, .. }
            | ResampleMethod::KldSampling { bound, .. } => (bound.n_min, bound.n_max),
        }
    }
}

/// Cumulative weights of a normalized set, for repeated inverse-CDF lookups.
#[derive(Debug, Clone)]
pub struct CumulativeWeights {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl CumulativeWeights {
    pub fn new<const D: usize>(set: &ParticleSet<D>) -> Result<Self> {
        set.require_normalized()?;
        let mut acc = 0.0;
        let cumulative: Vec<f64> = set
            .weights()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let last_positive = set
            .particles()
            .iter()
            .rposition(|p| p.weight > 0.0)
            .ok_or(Error::DegenerateWeights { step: None })?;
        Ok(CumulativeWeights {
            cumulative,
            last_positive,
        })
    }

    /// Smallest `i` with `C_i > u`. Rounding can leave the final cumulative
    /// weight just below one; such `u` map to the last particle with mass.
    pub fn select(&self, u: f64) -> usize {
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.select(rng.random::<f64>())
    }
}

/// Inverse-CDF selection of one ancestor for a uniform variate `u` in `[0, 1)`.
pub fn multinomial_draw<const D: usize>(set: &ParticleSet<D>, u: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::domain(format!(
            "uniform variate must lie in [0, 1), got {u}"
        )));
    }
    Ok(CumulativeWeights::new(set)?.select(u))
}

/// `n` i.i.d. multinomial draws, returned with uniform weights.
pub fn fixed_resample<const D: usize, R: Rng + ?Sized>(
    set: &ParticleSet<D>,
    n: usize,
    rng: &mut R,
) -> Result<ParticleSet<D>> {
    if n == 0 {
        return Err(Error::domain("resample size must be positive"));
    }
    let cdf = CumulativeWeights::new(set)?;
    let particles = set.particles();
    let states = (0..n).map(|_| particles[cdf.draw(rng)].state).collect();
    Ok(ParticleSet::from_uniform_unchecked(states))
}

/// Stop rule shared by both adaptive methods: a fresh grid, and a target of
/// `required(max(k, 2))` clamped into `[n_min, n_max]`.
struct AdaptiveStop<'a> {
    rule: SizeRule,
    bins: &'a BinConfig,
    grid: BinGrid,
    target: usize,
}

impl<'a> AdaptiveStop<'a> {
    fn new(bound: &SampleSizeBound, bins: &'a BinConfig, state_dim: usize) -> Result<Self> {
        let rule = SizeRule::new(bound)?;
        bins.validate(state_dim)?;
        Ok(AdaptiveStop {
            target: rule.running(0),
            rule,
            bins,
            grid: BinGrid::new(),
        })
    }

    fn done(&self, drawn: usize) -> bool {
        drawn >= self.target
    }

    fn record(&mut self, state: &[f64]) -> Result<()> {
        if self.grid.observe_cell(bin_index(state, self.bins)?) {
            self.target = self.rule.running(self.grid.k());
        }
        Ok(())
    }
}

/// KLD-resampling: draws from the weighted posterior one particle at a time
/// until the draw count satisfies the sample-size bound for the number of
/// cells hit so far, or reaches `n_max`.
pub fn kld_resample<const D: usize, R: Rng + ?Sized>(
    set: &ParticleSet<D>,
    bound: &SampleSizeBound,
    bins: &BinConfig,
    rng: &mut R,
) -> Result<ParticleSet<D>> {
    let cdf = CumulativeWeights::new(set)?;
    let mut stop = AdaptiveStop::new(bound, bins, D)?;
    let particles = set.particles();

    let mut states = Vec::with_capacity(bound.n_max.min(4096));
    while !stop.done(states.len()) {
        let state = particles[cdf.draw(rng)].state;
        stop.record(&state)?;
        states.push(state);
    }
    Ok(ParticleSet::from_uniform_unchecked(states))
}

/// KLD-sampling: draw an ancestor, propagate it, bin the predicted state and
/// weight it by the measurement, until the bound for the predicted cells is
/// met.
///
/// `log_likelihood` returns the log weight of a predicted state up to an
/// additive constant. The returned set carries `exp(l_i - max_j l_j)` as
/// weights and is not normalized.
pub fn kld_sampling_predict<const D: usize, R, P, L>(
    prev: &ParticleSet<D>,
    mut propagate: P,
    mut log_likelihood: L,
    bound: &SampleSizeBound,
    bins: &BinConfig,
    rng: &mut R,
) -> Result<ParticleSet<D>>
where
    R: Rng + ?Sized,
    P: FnMut(&[f64; D], &mut R) -> [f64; D],
    L: FnMut(&[f64; D]) -> Result<f64>,
{
    let cdf = CumulativeWeights::new(prev)?;
    let mut stop = AdaptiveStop::new(bound, bins, D)?;
    let ancestors = prev.particles();

    let mut predicted = Vec::with_capacity(bound.n_max.min(4096));
    let mut log_weights = Vec::with_capacity(bound.n_max.min(4096));
    while !stop.done(predicted.len()) {
        let ancestor = &ancestors[cdf.draw(rng)].state;
        let state = propagate(ancestor, rng);
        stop.record(&state)?;
        log_weights.push(log_likelihood(&state)?);
        predicted.push(state);
    }

    let weights = exp_normalized(&log_weights)?;
    ParticleSet::new(
        predicted
            .into_iter()
            .zip(weights)
            .map(|(s, w)| Particle::new(s, w))
            .collect(),
    )
}

/// `exp(l_i - max l)`; the largest entry maps to exactly one.
pub(crate) fn exp_normalized(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_weights.iter().any(|l| l.is_nan()) {
        return Err(Error::DegenerateWeights { step: None });
    }
    Ok(log_weights.iter().map(|l| (l - max).exp()).collect())
}
