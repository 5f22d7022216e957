//! Monte Carlo harness comparing the fixed-size, KLD-sampling and
//! KLD-resampling filters on the bearing-only tracking scenario.
//!
//! Every trial owns two ChaCha8 streams keyed by `master_seed`: a truth
//! stream indexed by the trial alone, so all arms of a trial track the same
//! target, and a filter stream indexed by `(method, trial)`. Results are
//! merged in `(method, trial)` order, so the output does not depend on the
//! number of worker threads.

mod config;
mod output;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use config::BenchConfig;
pub use output::{emit_outputs, trace_file_name, write_aggregate_csv, write_trace_csv};

use crate::error::{Error, Result};
use crate::filter_core::FilterState;
use crate::resampling::MethodTag;
use crate::sample_size::{chi_square_quantile, SampleSizeBound, SizeRule};
use crate::tracking_model::{position_error, sample_initial_particles, simulate_truth, State};

const TRUTH_STREAM: u64 = 1;
const FILTER_STREAM: u64 = 2;

/// Random stream for one `(kind, method, trial)` triple. The 64-bit ChaCha
/// stream id packs the kind in the top byte, the method in the next byte and
/// the trial index in the low 48 bits.
pub fn trial_stream(master_seed: u64, kind: u64, method: u64, trial_index: usize) -> ChaCha8Rng {
    debug_assert!((trial_index as u64) < (1 << 48) && kind < 256 && method < 256);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(kind << 56 | method << 48 | trial_index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    /// Time index, starting at 1 for the first measurement.
    pub step: usize,
    pub truth: State,
    pub estimate: State,
    pub error: f64,
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialTrace {
    pub method: MethodTag,
    pub trial_index: usize,
    pub seed: u64,
    pub records: Vec<StepRecord>,
}

/// A trial aborted by a filter error, typically weight degeneracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub method: MethodTag,
    pub trial_index: usize,
    /// Time index of the failing step, when the error carries one.
    pub step: Option<usize>,
    pub message: String,
}

/// Runs one filter arm on one trial.
pub fn run_trial(
    cfg: &BenchConfig,
    method: MethodTag,
    trial_index: usize,
) -> std::result::Result<TrialTrace, TrialFailure> {
    let fail = |step: Option<usize>, e: Error| TrialFailure {
        method,
        trial_index,
        step,
        message: e.to_string(),
    };

    let truth_trial = if cfg.fixed_truth { 0 } else { trial_index };
    let mut truth_rng = trial_stream(cfg.master_seed, TRUTH_STREAM, 0, truth_trial);
    let truth = simulate_truth(&cfg.scenario, &mut truth_rng).map_err(|e| fail(None, e))?;

    let mut rng = trial_stream(cfg.master_seed, FILTER_STREAM, method.id(), trial_index);
    let initial =
        sample_initial_particles(cfg.n_init, &cfg.scenario, &mut rng).map_err(|e| fail(None, e))?;
    let mut filter = FilterState::new(initial, cfg.method(method)).map_err(|e| fail(None, e))?;

    let mut records = Vec::with_capacity(truth.states.len());
    for (t, (x, &z)) in truth.states.iter().zip(&truth.measurements).enumerate() {
        let step = t + 1;
        let out = filter
            .step(z, &cfg.scenario, &mut rng)
            .map_err(|e| fail(Some(step), e))?;
        records.push(StepRecord {
            step,
            truth: *x,
            estimate: out.estimate,
            error: position_error(&out.estimate, x),
            n_used: out.n_used,
        });
    }
    Ok(TrialTrace {
        method,
        trial_index,
        seed: cfg.master_seed,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub step: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_n: f64,
    pub std_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: MethodTag,
    pub trials: usize,
    pub failures: Vec<TrialFailure>,
    /// One entry per step; empty when every trial failed.
    pub steps: Vec<StepStats>,
}

impl MethodSummary {
    pub fn failed(&self) -> usize {
        self.failures.len()
    }

    pub fn succeeded(&self) -> usize {
        self.trials - self.failures.len()
    }

    pub fn all_failed(&self) -> bool {
        self.succeeded() == 0
    }

    /// Mean over steps of the per-step mean error.
    pub fn time_averaged_error(&self) -> Option<f64> {
        (!self.steps.is_empty())
            .then(|| self.steps.iter().map(|s| s.mean_error).sum::<f64>() / self.steps.len() as f64)
    }

    pub fn time_averaged_n(&self) -> Option<f64> {
        (!self.steps.is_empty())
            .then(|| self.steps.iter().map(|s| s.mean_n).sum::<f64>() / self.steps.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub config: BenchConfig,
    pub methods: Vec<MethodSummary>,
}

impl AggregateReport {
    pub fn method(&self, tag: MethodTag) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == tag)
    }

    pub fn any_method_all_failed(&self) -> bool {
        self.methods.iter().any(MethodSummary::all_failed)
    }
}

/// Runs every configured method for `cfg.trials` trials and aggregates the
/// per-step statistics. Failed trials are excluded from the statistics and
/// listed in the summary.
pub fn run_monte_carlo(cfg: &BenchConfig) -> Result<AggregateReport> {
    cfg.validate()?;
    let jobs: Vec<(MethodTag, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| (0..cfg.trials).map(move |i| (m, i)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(m, i)| run_trial(cfg, m, i))
        .collect();

    let mut results = results.into_iter();
    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let mut traces = Vec::with_capacity(cfg.trials);
            let mut failures = Vec::new();
            for r in results.by_ref().take(cfg.trials) {
                match r {
                    Ok(t) => traces.push(t),
                    Err(f) => failures.push(f),
                }
            }
            MethodSummary {
                method,
                trials: cfg.trials,
                failures,
                steps: aggregate(&traces, cfg.scenario.num_steps),
            }
        })
        .collect();

    Ok(AggregateReport {
        config: cfg.clone(),
        methods,
    })
}

/// Arithmetic mean and population standard deviation across traces, per
/// step. Empty input yields no rows.
pub fn aggregate(traces: &[TrialTrace], num_steps: usize) -> Vec<StepStats> {
    if traces.is_empty() {
        return Vec::new();
    }
    (0..num_steps)
        .map(|t| {
            let errors: Vec<f64> = traces.iter().map(|tr| tr.records[t].error).collect();
            let sizes: Vec<f64> = traces
                .iter()
                .map(|tr| tr.records[t].n_used as f64)
                .collect();
            let (mean_error, std_error) = mean_std(&errors);
            let (mean_n, std_n) = mean_std(&sizes);
            StepStats {
                step: t + 1,
                mean_error,
                std_error,
                mean_n,
                std_n,
            }
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row of the sample-size diagnostic table; both sizes are unclamped
/// reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeRow {
    pub k: usize,
    pub wilson_hilferty: f64,
    pub exact_chi_square: f64,
}

impl SizeRow {
    pub fn relative_error(&self) -> f64 {
        (self.wilson_hilferty - self.exact_chi_square).abs() / self.exact_chi_square
    }
}

/// Wilson-Hilferty size against `chi2_{k-1, 1-delta} / (2 epsilon)` for
/// `k = 2..=k_max`.
pub fn size_table(bound: &SampleSizeBound, k_max: usize) -> Result<Vec<SizeRow>> {
    if k_max < 2 {
        return Err(Error::domain(format!(
            "k_max must be at least 2, got {k_max}"
        )));
    }
    if k_max > u32::MAX as usize {
        return Err(Error::domain("k_max too large"));
    }
    let rule = SizeRule::new(bound)?;
    (2..=k_max)
        .map(|k| {
            let exact = chi_square_quantile((k - 1) as u32, 1.0 - bound.delta)?;
            Ok(SizeRow {
                k,
                wilson_hilferty: rule.unclamped(k),
                exact_chi_square: exact / (2.0 * bound.epsilon),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(trials: usize, methods: Vec<MethodTag>) -> BenchConfig {
        let mut cfg = BenchConfig {
            trials,
            methods,
            master_seed: 11,
            ..BenchConfig::default()
        };
        cfg.scenario.num_steps = 8;
        cfg.n_init = 300;
        cfg
    }

    #[test]
    fn trial_shape_and_determinism() {
        let cfg = small(1, MethodTag::ALL.to_vec());
        for m in MethodTag::ALL {
            let a = run_trial(&cfg, m, 3).unwrap();
            assert_eq!(a.records.len(), 8);
            assert_eq!(a, run_trial(&cfg, m, 3).unwrap());
            assert!(a.records.iter().all(|r| r.error >= 0.0));
            let (lo, hi) = cfg.method(m).size_range();
            assert!(a.records.iter().all(|r| (lo..=hi).contains(&r.n_used)));
        }
        let fixed = run_trial(&cfg, MethodTag::Fixed, 0).unwrap();
        assert!(fixed.records.iter().all(|r| r.n_used == 300));
    }

    #[test]
    fn arms_share_truth_per_trial() {
        let cfg = small(1, MethodTag::ALL.to_vec());
        let a = run_trial(&cfg, MethodTag::Fixed, 2).unwrap();
        let b = run_trial(&cfg, MethodTag::KldResampling, 2).unwrap();
        let c = run_trial(&cfg, MethodTag::Fixed, 3).unwrap();
        let truth = |t: &TrialTrace| t.records.iter().map(|r| r.truth).collect::<Vec<_>>();
        assert_eq!(truth(&a), truth(&b));
        assert_ne!(truth(&a), truth(&c));
    }

    #[test]
    fn fixed_truth_reuses_trial_zero() {
        let mut cfg = small(1, vec![MethodTag::Fixed]);
        cfg.fixed_truth = true;
        let a = run_trial(&cfg, MethodTag::Fixed, 0).unwrap();
        let b = run_trial(&cfg, MethodTag::Fixed, 5).unwrap();
        assert_eq!(a.records[7].truth, b.records[7].truth);
        assert_ne!(a.records[7].estimate, b.records[7].estimate);
    }

    #[test]
    fn single_trial_aggregate_matches_trace() {
        let cfg = small(1, vec![MethodTag::KldResampling]);
        let report = run_monte_carlo(&cfg).unwrap();
        let trace = run_trial(&cfg, MethodTag::KldResampling, 0).unwrap();
        let summary = report.method(MethodTag::KldResampling).unwrap();
        for (s, r) in summary.steps.iter().zip(&trace.records) {
            assert_eq!(s.mean_error, r.error);
            assert_eq!(s.mean_n, r.n_used as f64);
            assert_eq!(s.std_error, 0.0);
            assert_eq!(s.std_n, 0.0);
        }
    }

    #[test]
    fn fixed_arm_aggregate_is_constant() {
        let report = run_monte_carlo(&small(6, vec![MethodTag::Fixed])).unwrap();
        let s = report.method(MethodTag::Fixed).unwrap();
        assert_eq!(s.succeeded() + s.failed(), 6);
        assert!(s.steps.iter().all(|x| x.mean_n == 300.0 && x.std_n == 0.0));
    }

    #[test]
    fn aggregation_ignores_trial_order() {
        let cfg = small(5, vec![MethodTag::KldSampling]);
        let mut traces: Vec<_> = (0..5)
            .map(|i| run_trial(&cfg, MethodTag::KldSampling, i).unwrap())
            .collect();
        let forward = aggregate(&traces, 8);
        traces.reverse();
        let backward = aggregate(&traces, 8);
        for (a, b) in forward.iter().zip(&backward) {
            assert_abs_diff_eq!(a.mean_error, b.mean_error, epsilon = 1e-15);
            assert_abs_diff_eq!(a.std_n, b.std_n, epsilon = 1e-9);
        }
        assert!(aggregate(&[], 8).is_empty());
    }

    #[test]
    fn failed_trials_are_counted_not_fatal() {
        // A target parked on the observer makes every bearing undefined.
        let mut cfg = small(3, vec![MethodTag::Fixed]);
        cfg.scenario.x0_truth = [0.0; 4];
        cfg.scenario.sigma_v1 = 0.0;
        cfg.scenario.sigma_v2 = 0.0;
        let report = run_monte_carlo(&cfg).unwrap();
        let s = report.method(MethodTag::Fixed).unwrap();
        assert_eq!(s.failed(), 3);
        assert!(s.all_failed());
        assert!(s.steps.is_empty());
        assert!(report.any_method_all_failed());
        assert_eq!(s.failures[0].step, None);
    }

    #[test]
    fn size_table_rows() {
        let table = size_table(&SampleSizeBound::default(), 50).unwrap();
        assert_eq!(table.len(), 49);
        assert_eq!(table[0].k, 2);
        assert_abs_diff_eq!(table[0].wilson_hilferty, 21.95, epsilon = 0.005);
        assert_abs_diff_eq!(table[0].exact_chi_square, 22.12, epsilon = 0.005);
        assert!(table.iter().all(|r| r.relative_error() <= 0.015));
        assert!(table
            .windows(2)
            .all(|w| w[1].wilson_hilferty > w[0].wilson_hilferty));
        assert!(size_table(&SampleSizeBound::default(), 1).is_err());
    }

    #[test]
    fn streams_differ_by_key() {
        use rand::Rng;
        let draw = |kind, method, trial| trial_stream(5, kind, method, trial).random::<u64>();
        let base = draw(1, 0, 0);
        assert_eq!(base, draw(1, 0, 0));
        assert_ne!(base, draw(2, 0, 0));
        assert_ne!(base, draw(1, 1, 0));
        assert_ne!(base, draw(1, 0, 1));
    }
}
