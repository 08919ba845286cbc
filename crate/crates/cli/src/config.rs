//! Experiment configuration. A TOML file with `[task]`, `[network]`,
//! `[train]` and an optional `[analyze]` section; unknown keys are errors.

use std::path::Path;

use holoquant_core::trainer::{SyntheticTask, TargetFunction, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub task: TaskSection,
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    /// One of `sum-of-sinusoids`, `polynomial-composition`, `radial-bump`.
    pub function: String,
    pub input_dim: usize,
    pub samples: usize,
    #[serde(default)]
    pub noise: f64,
    /// Samples held out for testing; 0 evaluates on the full set.
    #[serde(default)]
    pub test: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub widths: Vec<usize>,
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub l21_lambda: f64,
    pub init_sigma: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            weight_decay: t.weight_decay,
            l21_lambda: t.l21_lambda,
            init_sigma: t.init_sigma,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Pruning sparsities for `prune-sweep`.
    pub sparsities: Vec<f64>,
    /// Codebook sizes for `ablation`.
    pub ks: Vec<usize>,
    /// Sparsities whose pruning budgets `prune-vs-vq` compares at.
    pub budget_sparsities: Vec<f64>,
    pub seeds: Vec<u64>,
    pub restarts: usize,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self {
            sparsities: (0..10).map(|n| n as f64 / 10.0).collect(),
            ks: vec![4, 16, 64, 256],
            budget_sparsities: vec![0.25, 0.5, 0.75],
            seeds: vec![0],
            restarts: 3,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("config {}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        self.function()?;
        let w = &self.network.widths;
        if w.len() < 2 || w.contains(&0) {
            return bad(format!("network.widths must list at least two positive widths, got {w:?}"));
        }
        if w[0] != self.task.input_dim {
            return bad(format!("network.widths[0] = {} but task.input_dim = {}", w[0], self.task.input_dim));
        }
        if self.network.grid_size < 2 {
            return bad(format!("network.grid_size must be at least 2, got {}", self.network.grid_size));
        }
        if self.task.samples == 0 || self.task.test >= self.task.samples {
            return bad(format!(
                "task.test = {} leaves no training samples out of task.samples = {}",
                self.task.test, self.task.samples
            ));
        }
        if !(self.task.noise >= 0.0 && self.task.noise.is_finite()) {
            return bad(format!("task.noise must be finite and non-negative, got {}", self.task.noise));
        }
        self.train_config().validate().map_err(|e| CliError::Config(format!("[train]: {e}")))
    }

    pub fn function(&self) -> CliResult<TargetFunction> {
        self.task.function.parse().map_err(|e| CliError::Config(format!("task.function: {e}")))
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.task.seed = seed;
        self.train.seed = seed;
        self.analyze.seeds = vec![seed];
    }

    pub fn task(&self) -> CliResult<SyntheticTask> {
        Ok(SyntheticTask::new(
            self.function()?,
            self.task.input_dim,
            self.task.samples,
            self.task.noise,
            self.task.seed,
        ))
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            weight_decay: t.weight_decay,
            l21_lambda: t.l21_lambda,
            init_sigma: t.init_sigma,
            seed: t.seed,
        }
    }
}
