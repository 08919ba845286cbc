//! Fixed catalog of synthetic regression targets.
//!
//! Inputs are drawn uniformly from `[-1, 1]^d`. Targets are scalar. The
//! catalog is versioned: changing any formula below must bump
//! [`TASK_CATALOG_VERSION`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::TrainError;

pub const TASK_CATALOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetFunction {
    /// `mean_i sin(pi * (i + 1) * x_i)`; for one input this is `sin(pi x)`.
    SumOfSinusoids,
    /// `t^3 - t / 2` composed with `t = mean_i x_i`.
    PolynomialComposition,
    /// `exp(-2 |x|^2 / d)`.
    RadialBump,
}

impl TargetFunction {
    pub const ALL: [TargetFunction; 3] =
        [TargetFunction::SumOfSinusoids, TargetFunction::PolynomialComposition, TargetFunction::RadialBump];

    pub fn name(self) -> &'static str {
        match self {
            TargetFunction::SumOfSinusoids => "sum-of-sinusoids",
            TargetFunction::PolynomialComposition => "polynomial-composition",
            TargetFunction::RadialBump => "radial-bump",
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        match self {
            TargetFunction::SumOfSinusoids => {
                x.iter().enumerate().map(|(i, v)| (PI * (i + 1) as f64 * v).sin()).sum::<f64>() / d
            }
            TargetFunction::PolynomialComposition => {
                let t = x.iter().sum::<f64>() / d;
                t * t * t - 0.5 * t
            }
            TargetFunction::RadialBump => (-2.0 * x.iter().map(|v| v * v).sum::<f64>() / d).exp(),
        }
    }
}

impl fmt::Display for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetFunction {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TrainError::InvalidConfig(format!("unknown target function `{s}`")))
    }
}

/// A regression problem drawn from the catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub function: TargetFunction,
    pub input_dim: usize,
    pub sample_count: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Row-major samples: `inputs` holds `len() * input_dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.input_dim..(n + 1) * self.input_dim]
    }
}

impl SyntheticTask {
    pub fn new(function: TargetFunction, input_dim: usize, sample_count: usize, noise_sigma: f64, seed: u64) -> Self {
        Self { function, input_dim, sample_count, noise_sigma, seed }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.input_dim == 0 || self.sample_count == 0 {
            return Err(TrainError::InvalidConfig("task needs positive input_dim and sample_count".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    /// Training set of `sample_count` samples.
    pub fn dataset(&self) -> Result<Dataset, TrainError> {
        Ok(self.train_test(0)?.0)
    }

    /// Training set followed by a held-out set of `test_count` samples drawn
    /// from the same stream.
    pub fn train_test(&self, test_count: usize) -> Result<(Dataset, Dataset), TrainError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sigma).expect("validated sigma");
        let train = self.draw(&mut rng, &noise, self.sample_count);
        let test = self.draw(&mut rng, &noise, test_count);
        Ok((train, test))
    }

    fn draw(&self, rng: &mut ChaCha8Rng, noise: &Normal<f64>, count: usize) -> Dataset {
        let mut inputs = Vec::with_capacity(count * self.input_dim);
        let mut targets = Vec::with_capacity(count);
        for _ in 0..count {
            let start = inputs.len();
            inputs.extend((0..self.input_dim).map(|_| rng.random_range(-1.0..=1.0)));
            let clean = self.function.eval(&inputs[start..]);
            let eps = if self.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            targets.push(clean + eps);
        }
        Dataset { input_dim: self.input_dim, inputs, targets }
    }
}
