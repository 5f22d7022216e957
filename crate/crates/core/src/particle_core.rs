//! Weighted particle sets, state-space binning and point estimation.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

const NORMALIZED_TOLERANCE: f64 = 1e-10;

/// A state hypothesis of dimension `D` with its importance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle<const D: usize> {
    pub state: [f64; D],
    pub weight: f64,
}

impl<const D: usize> Particle<D> {
    pub fn new(state: [f64; D], weight: f64) -> Self {
        Particle { state, weight }
    }
}

/// Non-empty weighted sample cloud.
///
/// The `normalized` flag records whether the weights are known to sum to one;
/// any mutation through [`ParticleSet::set_weights`] clears it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet<const D: usize> {
    particles: Vec<Particle<D>>,
    normalized: bool,
}

impl<const D: usize> ParticleSet<D> {
    /// Builds an unnormalized set, rejecting empty input, negative weights
    /// and non-finite state components.
    pub fn new(particles: Vec<Particle<D>>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::domain("particle set must be non-empty"));
        }
        for (i, p) in particles.iter().enumerate() {
            if p.weight.is_nan() || p.weight < 0.0 {
                return Err(Error::domain(format!(
                    "particle {i} has invalid weight {}",
                    p.weight
                )));
            }
            if p.state.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain(format!(
                    "particle {i} has a non-finite state"
                )));
            }
        }
        Ok(ParticleSet {
            particles,
            normalized: false,
        })
    }

    /// Equal weights `1/M` over the given states.
    pub fn uniform(states: Vec<[f64; D]>) -> Result<Self> {
        let w = 1.0 / states.len().max(1) as f64;
        let mut set = Self::new(states.into_iter().map(|s| Particle::new(s, w)).collect())?;
        set.normalized = true;
        Ok(set)
    }

    pub(crate) fn from_uniform_unchecked(states: Vec<[f64; D]>) -> Self {
        debug_assert!(!states.is_empty());
        let w = 1.0 / states.len() as f64;
        ParticleSet {
            particles: states.into_iter().map(|s| Particle::new(s, w)).collect(),
            normalized: true,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn particles(&self) -> &[Particle<D>] {
        &self.particles
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64; D]> + '_ {
        self.particles.iter().map(|p| &p.state)
    }

    pub fn weights(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.weight)
    }

    /// Replaces every weight; the set is marked unnormalized.
    pub fn set_weights(&mut self, weights: impl IntoIterator<Item = f64>) -> Result<()> {
        let mut count = 0;
        for (p, w) in self.particles.iter_mut().zip(weights) {
            p.weight = w;
            count += 1;
        }
        if count != self.particles.len() {
            return Err(Error::domain(format!(
                "expected {} weights, got {count}",
                self.particles.len()
            )));
        }
        self.normalized = false;
        Ok(())
    }

    pub fn into_particles(self) -> Vec<Particle<D>> {
        self.particles
    }

    /// Scales the weights to sum to one.
    pub fn normalize_weights(&mut self) -> Result<()> {
        if self
            .particles
            .iter()
            .any(|p| !p.weight.is_finite() || p.weight < 0.0)
        {
            return Err(Error::DegenerateWeights { step: None });
        }
        let total: f64 = self.weights().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateWeights { step: None });
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        self.normalized = true;
        Ok(())
    }

    /// Sets every weight to `1/M`.
    pub fn reset_uniform(&mut self) {
        let w = 1.0 / self.particles.len() as f64;
        for p in &mut self.particles {
            p.weight = w;
        }
        self.normalized = true;
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if !self.normalized {
            return Err(Error::Contract("particle set is not normalized".into()));
        }
        debug_assert!((self.weights().sum::<f64>() - 1.0).abs() <= NORMALIZED_TOLERANCE);
        Ok(())
    }

    /// Component-wise `sum_i w_i x_i` of a normalized set.
    pub fn weighted_mean(&self) -> Result<[f64; D]> {
        self.require_normalized()?;
        let mut mean = [0.0; D];
        for p in &self.particles {
            for (m, x) in mean.iter_mut().zip(&p.state) {
                *m += p.weight * x;
            }
        }
        Ok(mean)
    }
}

/// Which state dimensions are binned, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinConfig {
    pub dims: Vec<usize>,
    pub cell_size: Vec<f64>,
    pub origin: Vec<f64>,
}

impl BinConfig {
    /// Origin-anchored cells over the listed dimensions.
    pub fn new(dims: Vec<usize>, cell_size: Vec<f64>) -> Self {
        let origin = vec![0.0; dims.len()];
        BinConfig {
            dims,
            cell_size,
            origin,
        }
    }

    /// `[0.001, 0.001]` cells over the x-y position of the tracking state.
    pub fn position_2d() -> Self {
        Self::new(vec![0, 2], vec![0.001, 0.001])
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::config("bins.dims must list at least one dimension"));
        }
        if self.cell_size.len() != self.dims.len() || self.origin.len() != self.dims.len() {
            return Err(Error::config(
                "bins.dims, bins.cell_size and bins.origin must have equal lengths",
            ));
        }
        let mut seen = HashSet::new();
        for &d in &self.dims {
            if d >= state_dim {
                return Err(Error::config(format!(
                    "bin dimension {d} out of range for state dimension {state_dim}"
                )));
            }
            if !seen.insert(d) {
                return Err(Error::config(format!("bin dimension {d} listed twice")));
            }
        }
        if let Some(s) = self
            .cell_size
            .iter()
            .find(|s| !(**s > 0.0 && s.is_finite()))
        {
            return Err(Error::config(format!(
                "cell size must be positive, got {s}"
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::config("bin origin must be finite"));
        }
        Ok(())
    }
}

impl Default for BinConfig {
    fn default() -> Self {
        Self::position_2d()
    }
}

/// Integer index of a cell, one entry per binned dimension.
pub type CellIndex = SmallVec<[i64; 4]>;

/// Half-open cell `[m s, (m+1) s)` containing `state`, per binned dimension.
pub fn bin_index(state: &[f64], cfg: &BinConfig) -> Result<CellIndex> {
    cfg.dims
        .iter()
        .zip(&cfg.cell_size)
        .zip(&cfg.origin)
        .map(|((&d, &size), &origin)| {
            let x = *state.get(d).ok_or_else(|| {
                Error::domain(format!(
                    "state of dimension {} has no component {d}",
                    state.len()
                ))
            })?;
            if !x.is_finite() {
                return Err(Error::domain(format!("state component {d} is not finite")));
            }
            Ok(((x - origin) / size).floor() as i64)
        })
        .collect()
}

/// Sparse record of the cells that hold at least one particle.
#[derive(Debug, Clone, Default)]
pub struct BinGrid {
    occupied: HashSet<CellIndex>,
}

impl BinGrid {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks `idx` occupied; true iff it was empty before.
    pub fn observe_cell(&mut self, idx: CellIndex) -> bool {
        self.occupied.insert(idx)
    }

    /// Number of occupied cells.
    pub fn k(&self) -> usize {
        self.occupied.len()
    }

    pub fn contains(&self, idx: &[i64]) -> bool {
        self.occupied.contains(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use smallvec::smallvec;

    fn weighted(weights: &[f64]) -> ParticleSet<4> {
        ParticleSet::new(
            weights
                .iter()
                .enumerate()
                .map(|(i, &w)| Particle::new([i as f64; 4], w))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn normalize_examples() {
        let mut s = weighted(&[2.0, 2.0]);
        s.normalize_weights().unwrap();
        assert_eq!(s.weights().collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert!(s.is_normalized());

        let mut s = weighted(&[1.0, 0.0, 3.0]);
        s.normalize_weights().unwrap();
        assert_eq!(s.weights().collect::<Vec<_>>(), vec![0.25, 0.0, 0.75]);

        let mut s = weighted(&[0.0, 0.0]);
        assert!(matches!(
            s.normalize_weights(),
            Err(Error::DegenerateWeights { step: None })
        ));
    }

    #[test]
    fn normalize_rejects_non_finite() {
        let mut s = weighted(&[1.0, 1.0]);
        s.set_weights([1.0, f64::INFINITY]).unwrap();
        assert!(s.normalize_weights().is_err());
        s.set_weights([1.0, f64::NAN]).unwrap();
        assert!(s.normalize_weights().is_err());
    }

    #[test]
    fn set_rejects_invalid_particles() {
        assert!(ParticleSet::<4>::new(vec![]).is_err());
        assert!(ParticleSet::new(vec![Particle::new([0.0; 4], -1.0)]).is_err());
        assert!(ParticleSet::new(vec![Particle::new([f64::NAN, 0.0, 0.0, 0.0], 1.0)]).is_err());
        assert!(ParticleSet::<4>::uniform(vec![]).is_err());
    }

    #[test]
    fn set_weights_clears_normalized_flag() {
        let mut s = ParticleSet::uniform(vec![[0.0; 4]; 3]).unwrap();
        assert!(s.is_normalized());
        s.set_weights([1.0, 2.0, 3.0]).unwrap();
        assert!(!s.is_normalized());
        assert!(s.set_weights([1.0]).is_err());
    }

    #[test]
    fn bin_index_examples() {
        let cfg = BinConfig::position_2d();
        let idx = |s: [f64; 4]| bin_index(&s, &cfg).unwrap().to_vec();
        assert_eq!(idx([0.0005, 9.0, 0.0005, 9.0]), vec![0, 0]);
        assert_eq!(idx([-0.0005, 9.0, 0.0015, 9.0]), vec![-1, 1]);
        assert_eq!(idx([0.001, 9.0, 0.0, 9.0]), vec![1, 0]);
    }

    #[test]
    fn bin_index_errors() {
        let cfg = BinConfig::position_2d();
        assert!(bin_index(&[f64::NAN, 0.0, 0.0, 0.0], &cfg).is_err());
        assert!(bin_index(&[0.0, 0.0], &cfg).is_err());
        // Non-binned dimensions may hold anything.
        assert!(bin_index(&[0.0, f64::NAN, 0.0, 0.0], &cfg).is_ok());
    }

    #[test]
    fn bin_config_validation() {
        assert!(BinConfig::position_2d().validate(4).is_ok());
        assert!(BinConfig::new(vec![0, 4], vec![1.0, 1.0])
            .validate(4)
            .is_err());
        assert!(BinConfig::new(vec![0, 0], vec![1.0, 1.0])
            .validate(4)
            .is_err());
        assert!(BinConfig::new(vec![0], vec![0.0]).validate(4).is_err());
        assert!(BinConfig::new(vec![0], vec![1.0, 1.0]).validate(4).is_err());
        assert!(BinConfig::new(vec![], vec![]).validate(4).is_err());
    }

    #[test]
    fn observe_cell_examples() {
        let mut grid = BinGrid::new();
        assert!(grid.observe_cell(smallvec![0, 0]));
        assert_eq!(grid.k(), 1);
        assert!(!grid.observe_cell(smallvec![0, 0]));
        assert_eq!(grid.k(), 1);
        assert!(grid.observe_cell(smallvec![3, -2]));
        assert_eq!(grid.k(), 2);
        assert!(grid.contains(&[3, -2]));
    }

    #[test]
    fn weighted_mean_examples() {
        let s = ParticleSet::uniform(vec![[1.0, 2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(s.weighted_mean().unwrap(), [1.0, 2.0, 3.0, 4.0]);

        let s = ParticleSet::uniform(vec![[0.0; 4], [2.0; 4]]).unwrap();
        assert_eq!(s.weighted_mean().unwrap(), [1.0; 4]);

        let mut s = ParticleSet::new(vec![
            Particle::new([1.0, 0.0, 0.0, 0.0], 0.75),
            Particle::new([3.0, 0.0, 0.0, 0.0], 0.25),
        ])
        .unwrap();
        assert!(matches!(s.weighted_mean(), Err(Error::Contract(_))));
        s.normalize_weights().unwrap();
        assert_eq!(s.weighted_mean().unwrap(), [1.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn reset_uniform_examples() {
        for (m, w) in [(4, 0.25), (1, 1.0), (2000, 0.0005)] {
            let mut s = weighted(&vec![3.0; m]);
            s.reset_uniform();
            assert!(s.is_normalized());
            assert!(s.weights().all(|x| x == w));
        }
    }

    fn raw_weights() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0_f64..100.0, 1..50)
            .prop_filter("needs positive mass", |w| w.iter().any(|x| *x > 1e-3))
    }

    proptest! {
        #[test]
        fn normalized_weights_sum_to_one(w in raw_weights()) {
            let mut s = weighted(&w);
            s.normalize_weights().unwrap();
            prop_assert!((s.weights().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(s.weights().all(|x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn normalization_is_scale_invariant(w in raw_weights(), c in 1e-3_f64..1e3) {
            let mut a = weighted(&w);
            let mut b = weighted(&w.iter().map(|x| x * c).collect::<Vec<_>>());
            a.normalize_weights().unwrap();
            b.normalize_weights().unwrap();
            for (x, y) in a.weights().zip(b.weights()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn shifting_origin_by_one_cell_shifts_index(
            x in -10.0_f64..10.0, y in -10.0_f64..10.0, s in 0.001_f64..1.0
        ) {
            let base = BinConfig::new(vec![0, 2], vec![s, s]);
            let mut shifted = base.clone();
            shifted.origin[0] = -s;
            let state = [x, 0.0, y, 0.0];
            let a = bin_index(&state, &base).unwrap();
            let b = bin_index(&state, &shifted).unwrap();
            // floor((x + s)/s) is floor(x/s) + 1 up to rounding exactly at a boundary.
            let exact_boundary = ((x + s) / s).fract() == 0.0 || (x / s).fract() == 0.0;
            prop_assume!(!exact_boundary);
            prop_assert_eq!(b[0], a[0] + 1);
            prop_assert_eq!(b[1], a[1]);
        }

        #[test]
        fn observe_cell_counts_once(i in -100i64..100, j in -100i64..100, n in 1usize..20) {
            let mut grid = BinGrid::new();
            for _ in 0..n {
                grid.observe_cell(smallvec![i, j]);
            }
            prop_assert_eq!(grid.k(), 1);
        }

        #[test]
        fn weighted_mean_ignores_order(
            pts in prop::collection::vec((-5.0_f64..5.0, 0.01_f64..1.0), 1..30),
            seed in any::<u64>()
        ) {
            let particles: Vec<_> = pts.iter().map(|&(x, w)| Particle::new([x, -x, 2.0 * x, 0.5], w)).collect();
            let mut shuffled = particles.clone();
            let n = shuffled.len();
            for i in (1..n).rev() {
                shuffled.swap(i, (seed as usize).wrapping_mul(i + 7) % (i + 1));
            }
            let mut a = ParticleSet::new(particles).unwrap();
            let mut b = ParticleSet::new(shuffled).unwrap();
            a.normalize_weights().unwrap();
            b.normalize_weights().unwrap();
            let (ma, mb) = (a.weighted_mean().unwrap(), b.weighted_mean().unwrap());
            for (x, y) in ma.iter().zip(&mb) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn uniform_constructor_weights() {
        let s = ParticleSet::uniform(vec![[0.0; 4]; 8]).unwrap();
        for w in s.weights() {
            assert_abs_diff_eq!(w, 0.125);
        }
    }
}
