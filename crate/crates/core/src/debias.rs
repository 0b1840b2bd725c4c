//! Bootstrap bias correction of per-arm sample means.
//!
//! Replays the logged policy `B` times in the bootstrap world, where the arm
//! means are the observed sample means, and subtracts the average bias seen
//! there: `corrected = μ̂ − ((1/B) Σ_b μ̂*_b − μ̂)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{build_world, BootstrapError, BootstrapSpec};
use crate::rng::derive_seed;
use crate::simulator::{drive, summarize, BanditLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DebiasError {
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error("arm {} was not pulled in any bootstrap replay; its bias is undefined", .arm + 1)]
    UndefinedBias { arm: usize },
}

/// Debiasing output for one arm. `arm` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDebias {
    pub arm: usize,
    pub count: usize,
    pub raw_mean: f64,
    /// Average of the replay sample means over replays that pulled the arm.
    pub bootstrap_mean: Option<f64>,
    /// Monte Carlo standard error of `bootstrap_mean`; needs two replays.
    pub bootstrap_se: Option<f64>,
    pub estimated_bias: Option<f64>,
    pub corrected_mean: Option<f64>,
    pub zero_pull_replays: usize,
    pub b_effective: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasReport {
    pub bootstrap: BootstrapSpec,
    pub seed: u64,
    pub horizon: usize,
    pub arms: Vec<ArmDebias>,
}

impl DebiasReport {
    /// Corrected means of every arm, or the first arm whose bias is undefined.
    pub fn corrected_means(&self) -> Result<Vec<f64>, DebiasError> {
        self.arms
            .iter()
            .map(|a| {
                a.corrected_mean
                    .ok_or(DebiasError::UndefinedBias { arm: a.arm - 1 })
            })
            .collect()
    }

    pub fn estimated_biases(&self) -> Result<Vec<f64>, DebiasError> {
        self.arms
            .iter()
            .map(|a| {
                a.estimated_bias
                    .ok_or(DebiasError::UndefinedBias { arm: a.arm - 1 })
            })
            .collect()
    }
}

/// Runs the bootstrap replays for `log`. Replay `b` is seeded with
/// `derive_seed(seed, b)`, and the per-arm sums are reduced in order of `b`, so
/// the report does not depend on how the replays are scheduled.
pub fn debias(
    log: &BanditLog,
    spec: &BootstrapSpec,
    seed: u64,
) -> Result<DebiasReport, DebiasError> {
    let summary = summarize(log);
    let world = build_world(&summary, log, spec)?;
    let policy = log.policy();
    let horizon = log.horizon();
    let replay_means: Vec<Vec<Option<f64>>> = (0..spec.replays as u64)
        .into_par_iter()
        .map(|b| {
            let state = drive(horizon, policy, &world, derive_seed(seed, b), |_, _| {});
            (0..state.arms())
                .map(|k| (state.count(k) > 0).then(|| state.mean(k)))
                .collect()
        })
        .collect();
    let arms = summary
        .arms
        .iter()
        .enumerate()
        .map(|(k, stats)| {
            let raw_mean = stats.mean.expect("build_world rejects unpulled arms");
            let means: Vec<f64> = replay_means.iter().filter_map(|r| r[k]).collect();
            let b_effective = means.len();
            let n = b_effective as f64;
            let bootstrap_mean = (b_effective > 0).then(|| means.iter().sum::<f64>() / n);
            let bootstrap_se = bootstrap_mean.filter(|_| b_effective > 1).map(|avg| {
                (means.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            });
            let estimated_bias = bootstrap_mean.map(|avg| avg - raw_mean);
            ArmDebias {
                arm: k + 1,
                count: stats.count,
                raw_mean,
                bootstrap_mean,
                bootstrap_se,
                estimated_bias,
                corrected_mean: estimated_bias.map(|bias| raw_mean - bias),
                zero_pull_replays: spec.replays - b_effective,
                b_effective,
            }
        })
        .collect();
    Ok(DebiasReport {
        bootstrap: *spec,
        seed,
        horizon,
        arms,
    })
}
