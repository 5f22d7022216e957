//! Scalar mathematics behind the KLD sample-size bound.
//!
//! The number of particles needed so that, with probability `1 - delta`, the
//! KL divergence between the sample-based maximum likelihood estimate and the
//! underlying discrete distribution over `k` bins stays below `epsilon` is
//!
//! ```text
//! N = chi2_{k-1, 1-delta} / (2 epsilon)
//! ```
//!
//! [`required_sample_size`] evaluates this through the Wilson-Hilferty
//! cube-root approximation of the chi-square quantile. [`chi_square_quantile`]
//! computes the exact quantile by root finding on the regularized incomplete
//! gamma function and is kept independent of the approximation so it can
//! serve as its oracle.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// The `(epsilon, delta)` pair plus the floor and cap on adaptive sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSizeBound {
    pub epsilon: f64,
    pub delta: f64,
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for SampleSizeBound {
    fn default() -> Self {
        SampleSizeBound {
            epsilon: 0.15,
            delta: 0.01,
            n_min: 50,
            n_max: 2000,
        }
    }
}

impl SampleSizeBound {
    pub fn new(epsilon: f64, delta: f64, n_min: usize, n_max: usize) -> Result<Self> {
        let bound = SampleSizeBound {
            epsilon,
            delta,
            n_min,
            n_max,
        };
        bound.validate()?;
        Ok(bound)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::domain(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::domain(format!(
                "need 1 <= n_min <= n_max, got n_min={} n_max={}",
                self.n_min, self.n_max
            )));
        }
        Ok(())
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// Halley refinement against the `erfc`-based CDF.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile needs 0 < p < 1, got {p}"
        )));
    }

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };

    let mut x = if p < P_LOW {
        tail(p)
    } else if p > 1.0 - P_LOW {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    for _ in 0..2 {
        let e = std_normal_cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Caches `z_{1-delta}` so the bound can be re-evaluated cheaply every time a
/// new bin becomes occupied.
#[derive(Debug, Clone, Copy)]
pub struct SizeRule {
    bound: SampleSizeBound,
    z: f64,
}

impl SizeRule {
    pub fn new(bound: &SampleSizeBound) -> Result<Self> {
        bound.validate()?;
        Ok(SizeRule {
            bound: *bound,
            z: std_normal_quantile(1.0 - bound.delta)?,
        })
    }

    pub fn bound(&self) -> &SampleSizeBound {
        &self.bound
    }

    /// Wilson-Hilferty sample size for `k >= 2` occupied bins, before the
    /// ceiling and clamping.
    pub fn unclamped(&self, k: usize) -> f64 {
        wilson_hilferty_size(k, self.bound.epsilon, self.z)
    }

    /// Ceiling of [`SizeRule::unclamped`], clamped into `[n_min, n_max]`.
    pub fn required(&self, k: usize) -> Result<usize> {
        if k < 2 {
            return Err(Error::domain(format!(
                "sample-size bound needs at least 2 occupied bins, got {k}"
            )));
        }
        let n = self.unclamped(k).ceil();
        let clamped = n.clamp(self.bound.n_min as f64, self.bound.n_max as f64);
        Ok(clamped as usize)
    }

    /// Requirement used while drawing: fewer than two occupied bins count as
    /// two, the smallest count for which the bound is defined.
    pub fn running(&self, k: usize) -> usize {
        self.required(k.max(2))
            .expect("k >= 2 is always accepted by the size rule")
    }
}

fn wilson_hilferty_size(k: usize, epsilon: f64, z: f64) -> f64 {
    let dof = (k - 1) as f64;
    let c = 2.0 / (9.0 * dof);
    let cube = 1.0 - c + c.sqrt() * z;
    dof / (2.0 * epsilon) * cube * cube * cube
}

/// Number of particles required for `k` occupied bins, via the
/// Wilson-Hilferty transformation, rounded up and clamped into
/// `[n_min, n_max]`.
pub fn required_sample_size(k: usize, bound: &SampleSizeBound) -> Result<usize> {
    SizeRule::new(bound)?.required(k)
}

/// Exact `p`-quantile of the chi-square distribution with `dof` degrees of
/// freedom.
///
/// Solves `P(dof/2, x/2) = p` for `x`, where `P` is the regularized lower
/// incomplete gamma function, with Newton steps safeguarded by a bisection
/// bracket.
pub fn chi_square_quantile(dof: u32, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::domain("chi-square quantile needs dof >= 1"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "chi-square quantile needs 0 < p < 1, got {p}"
        )));
    }

    let a = f64::from(dof) / 2.0;
    let log_norm = ln_gamma(a) + a * std::f64::consts::LN_2;
    let cdf = |x: f64| gamma_lr(a, x / 2.0);
    let pdf = |x: f64| ((a - 1.0) * x.ln() - x / 2.0 - log_norm).exp();

    let mut lo = 0.0_f64;
    let mut hi = f64::from(dof).max(1.0);
    while cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = cdf(x) - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }

        let slope = pdf(x);
        let newton = x - f / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };

        if (next - x).abs() <= 1e-14 * x || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// A discrete probability distribution over a shared, index-aligned support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::domain("distribution needs a non-empty support"));
        }
        if let Some(i) = masses.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::domain(format!(
                "mass {i} is negative or not finite: {}",
                masses[i]
            )));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("masses sum to {total}, not 1")));
        }
        Ok(DiscreteDistribution { masses })
    }

    /// Normalizes non-negative counts (or weights) into a distribution.
    pub fn from_counts<I>(counts: I) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: Into<f64>,
    {
        let raw: Vec<f64> = counts.into_iter().map(Into::into).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain("counts must have a positive finite total"));
        }
        Self::new(raw.into_iter().map(|c| c / total).collect())
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

/// `sum_i p_i ln(p_i / q_i)` in nats, with `0 ln(0/q) = 0`.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::domain(format!(
            "support lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.masses.iter().zip(&q.masses).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::InfiniteDivergence { index });
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative value when p == q.
    Ok(total.max(0.0))
}
