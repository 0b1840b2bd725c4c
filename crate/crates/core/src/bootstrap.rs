//! Bootstrap-world reward laws built from an observed log.
//!
//! The Gaussian multiplier bootstrap recombines centred observations with
//! N(0, 1) weights, `z* = μ̂ + n^{-1/2} Σ_i w_i (z_i − μ̂)`, which is exactly
//! N(μ̂, σ̂²) with the MLE variance. The world samples that normal directly.
//! Efron's bootstrap resamples the arm's observed rewards with replacement,
//! one independent index per pull.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::RewardDistribution;
use crate::rng::RngStream;
use crate::simulator::{ArmSummary, BanditLog, RewardSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BootstrapError {
    #[error("arm {} was never pulled; its bootstrap law is undefined", .arm + 1)]
    ZeroCountArm { arm: usize },
    #[error("invalid bootstrap spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BootstrapKind {
    #[serde(rename = "mb")]
    MultiplierGaussian,
    #[serde(rename = "efron")]
    Efron,
}

impl BootstrapKind {
    pub fn label(self) -> &'static str {
        match self {
            BootstrapKind::MultiplierGaussian => "mb",
            BootstrapKind::Efron => "efron",
        }
    }
}

impl std::str::FromStr for BootstrapKind {
    type Err = BootstrapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mb" => Ok(BootstrapKind::MultiplierGaussian),
            "efron" => Ok(BootstrapKind::Efron),
            other => Err(BootstrapError::InvalidSpec(format!(
                "unknown bootstrap kind `{other}` (expected mb or efron)"
            ))),
        }
    }
}

/// Bootstrap flavour and number of replays `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub kind: BootstrapKind,
    #[serde(rename = "B")]
    pub replays: usize,
}

impl BootstrapSpec {
    pub fn new(kind: BootstrapKind, replays: usize) -> Result<Self, BootstrapError> {
        let spec = Self { kind, replays };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BootstrapError> {
        if self.replays == 0 {
            return Err(BootstrapError::InvalidSpec("B must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArmSource {
    /// N(μ̂, σ̂²).
    Gaussian(RewardDistribution),
    /// Uniform resampling of the observed rewards.
    Empirical(Vec<f64>),
}

impl ArmSource {
    pub fn mean(&self) -> f64 {
        match self {
            ArmSource::Gaussian(d) => d.mean(),
            ArmSource::Empirical(xs) => xs.iter().sum::<f64>() / xs.len() as f64,
        }
    }
}

/// One reward source per arm; immutable and shareable across replays.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapWorld {
    sources: Vec<ArmSource>,
}

impl BootstrapWorld {
    pub fn sources(&self) -> &[ArmSource] {
        &self.sources
    }
}

impl RewardSource for BootstrapWorld {
    fn arm_count(&self) -> usize {
        self.sources.len()
    }

    fn draw(&self, arm: usize, rng: &mut RngStream) -> f64 {
        match &self.sources[arm] {
            ArmSource::Gaussian(d) => d.sample(rng),
            ArmSource::Empirical(xs) => xs[rng.below(xs.len())],
        }
    }
}

pub fn build_world(
    summary: &ArmSummary,
    log: &BanditLog,
    spec: &BootstrapSpec,
) -> Result<BootstrapWorld, BootstrapError> {
    spec.validate()?;
    if let Some(&arm) = summary.unpulled().first() {
        return Err(BootstrapError::ZeroCountArm { arm });
    }
    let sources = summary
        .arms
        .iter()
        .enumerate()
        .map(|(k, stats)| match spec.kind {
            BootstrapKind::MultiplierGaussian => {
                let mean = stats.mean.expect("pulled arm has a mean");
                ArmSource::Gaussian(
                    RewardDistribution::gaussian(mean, stats.variance)
                        .expect("sample moments are finite"),
                )
            }
            BootstrapKind::Efron => ArmSource::Empirical(log.arm_rewards(k)),
        })
        .collect();
    Ok(BootstrapWorld { sources })
}
