use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle_core::BinConfig;
use crate::resampling::{MethodTag, ResampleMethod};
use crate::sample_size::SampleSizeBound;
use crate::tracking_model::TrackingScenario;

/// Trial indices share the 64-bit stream id with the stream kind and method.
pub(crate) const MAX_TRIALS: usize = 1 << 48;

/// Fully resolved benchmark configuration. Missing keys take the defaults
/// below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub scenario: TrackingScenario,
    pub bound: SampleSizeBound,
    pub bins: BinConfig,
    /// Initial particle count for every arm, and the size of the fixed arm.
    pub n_init: usize,
    pub methods: Vec<MethodTag>,
    pub trials: usize,
    pub master_seed: u64,
    /// Reuse the truth trajectory of trial 0 for every trial.
    pub fixed_truth: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            scenario: TrackingScenario::default(),
            bound: SampleSizeBound::default(),
            bins: BinConfig::position_2d(),
            n_init: 1000,
            methods: MethodTag::ALL.to_vec(),
            trials: 1000,
            master_seed: 0,
            fixed_truth: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.bound
            .validate()
            .map_err(|e| Error::config(format!("bound: {e}")))?;
        self.bins.validate(4)?;
        if self.n_init == 0 {
            return Err(Error::config("n_init must be positive"));
        }
        if self.trials == 0 || self.trials >= MAX_TRIALS {
            return Err(Error::config(format!(
                "trials must lie in [1, 2^48), got {}",
                self.trials
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods must list at least one method"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::config(format!("method {m} listed twice")));
            }
        }
        Ok(())
    }

    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchConfig =
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to JSON")
    }

    /// The resample method a given arm runs with under this config.
    pub fn method(&self, tag: MethodTag) -> ResampleMethod {
        match tag {
            MethodTag::Fixed => ResampleMethod::Fixed { n: self.n_init },
            MethodTag::KldResampling => ResampleMethod::KldResampling {
                bound: self.bound,
                bins: self.bins.clone(),
            },
            MethodTag::KldSampling => ResampleMethod::KldSampling {
                bound: self.bound,
                bins: self.bins.clone(),
            },
        }
    }
}
