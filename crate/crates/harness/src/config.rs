//! Experiment configuration: a flat `key = value` file whose defaults are the
//! paper's experimental settings.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WorkerSource {
    Unif,
    Onespe,
    Stack,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskSource {
    Unif,
    Onespe,
    Subvolume,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: WorkerSource,
    pub task_generator: TaskSource,
    pub n_dims: usize,
    pub n_workers: usize,
    pub n_tasks: usize,
    pub epsilon: f64,
    pub tau: usize,
    /// Decryption threshold `T`.
    pub threshold: usize,
    /// Number of key-shares handed out by the dealer.
    pub key_shares: usize,
    pub l_bins: usize,
    pub depth_h: usize,
    pub key_bits: u64,
    pub subvolume_ratio: f64,
    pub task_weight_bits: u64,
    pub seed: u64,
    pub repetitions: usize,
    /// Plaintext-with-noise sums and plaintext bucket fetches.
    pub mock_crypto: bool,
    /// Profile file produced by `ingest`, required by the `stack` generator.
    pub stack_profiles: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: WorkerSource::Unif,
            task_generator: TaskSource::Unif,
            n_dims: 10,
            n_workers: 10_000,
            n_tasks: 1_000,
            epsilon: 0.1,
            tau: 1,
            threshold: 2,
            key_shares: 3,
            l_bins: 10,
            depth_h: 10,
            key_bits: 1024,
            subvolume_ratio: 0.5,
            task_weight_bits: pkd::workload::DEFAULT_TASK_WEIGHT_BITS,
            seed: 0,
            repetitions: 5,
            mock_crypto: false,
            stack_profiles: None,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale end-to-end configuration with real cryptography.
    pub fn smoke() -> Self {
        Self {
            n_dims: 2,
            n_workers: 100,
            n_tasks: 20,
            depth_h: 2,
            l_bins: 5,
            key_bits: 512,
            task_weight_bits: 1024,
            repetitions: 1,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold <= self.tau {
            bail!("threshold T = {} must exceed tau = {}", self.threshold, self.tau);
        }
        if self.tau >= self.n_workers {
            bail!("tau = {} must be below the number of workers {}", self.tau, self.n_workers);
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be positive, got {}", self.epsilon);
        }
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        if self.key_shares < self.threshold {
            bail!("{} key-shares cannot meet threshold {}", self.key_shares, self.threshold);
        }
        if self.key_shares > self.n_workers {
            bail!("{} key-shares for only {} workers", self.key_shares, self.n_workers);
        }
        if self.n_dims == 0 || self.n_tasks == 0 || self.l_bins == 0 || self.depth_h == 0 {
            bail!("n_dims, n_tasks, l_bins and depth_h must all be at least 1");
        }
        if !(self.subvolume_ratio > 0.0 && self.subvolume_ratio <= 1.0) {
            bail!("subvolume_ratio must be in (0, 1], got {}", self.subvolume_ratio);
        }
        if self.task_weight_bits == 0 || !self.task_weight_bits.is_multiple_of(8) {
            bail!("task_weight_bits must be a positive multiple of 8");
        }
        if self.generator == WorkerSource::Stack && self.stack_profiles.is_none() {
            bail!("the stack generator needs stack_profiles");
        }
        Ok(())
    }
}
